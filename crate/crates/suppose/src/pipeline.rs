//! End-to-end fit orchestration: choose the source count, run the solver,
//! and assemble the uncertainty budget.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    estimate_optimum, greedy_find_alpha_n, BoundInputs, BoundReport, GreedyResult, GreedyStop,
    HistogramPolicy, SupportEstimate,
};
use crate::error::{Error, Result};
use crate::forward::BackgroundMode;
use crate::ga::{run_with_progress, GaConfig, GaRunRecord};
use crate::grid::SampledSignal;
use crate::irf::{IrfCache, IrfModel};
use crate::sources::SourceSet;

/// How the number of sources is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum NSelection {
    /// Fit with exactly this many sources.
    Explicit { n: usize },
    /// Preliminary fit, support histogram, uncertainty budget, final fit at
    /// the budget's optimum.
    Auto {
        /// Trial per-source intensity for the initial count; when absent the
        /// initial count falls back to `prelim_n`.
        alpha0: Option<f64>,
        /// Initial count when `alpha0` is not given.
        prelim_n: Option<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: BackgroundMode,
    pub selection: NSelection,
    pub ga: GaConfig,
    /// Generations for the preliminary fit in auto mode.
    pub prelim_generations: usize,
    /// Young-inequality parameter of the budget.
    pub epsilon: f64,
    pub histogram_policy: HistogramPolicy,
    pub greedy_stop: GreedyStop,
    pub greedy_cap: usize,
    /// Expected noise power over the fitted pixels; required for auto
    /// selection and for the solver's noise-floor stop.
    pub noise_power: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: BackgroundMode::SubtractedKnown,
            selection: NSelection::Auto {
                alpha0: None,
                prelim_n: Some(100),
            },
            ga: GaConfig::default(),
            prelim_generations: 3000,
            epsilon: 1.0,
            histogram_policy: HistogramPolicy::default(),
            greedy_stop: GreedyStop::FirstRise,
            greedy_cap: 20_000,
            noise_power: None,
        }
    }
}

/// Everything a fit produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOutcome {
    pub solution: SourceSet,
    pub run: GaRunRecord,
    pub alpha: f64,
    pub n: usize,
    pub z: f64,
    pub n_op: Option<usize>,
    pub bound: Option<BoundReport>,
    pub prelim: Option<GaRunRecord>,
    pub greedy: Option<GreedyResult>,
    pub support: Option<SupportEstimate>,
    /// Misfit ceiling from the budget at the fitted intensity.
    pub chi2_ceiling: Option<f64>,
}

/// Total-intensity estimate `Z` for the working mode: the plain signal sum
/// when the background is gone, the greedy-peel invariant otherwise.
fn estimate_z(
    signal: &SampledSignal,
    cache: &IrfCache,
    cfg: &PipelineConfig,
    alpha0: Option<f64>,
) -> Result<(f64, Option<GreedyResult>)> {
    match cfg.mode {
        BackgroundMode::None | BackgroundMode::SubtractedKnown => Ok((signal.sum(), None)),
        BackgroundMode::UnknownConstant => {
            let dev = signal.mean_subtracted();
            let a0 = alpha0.unwrap_or_else(|| dev.max_value() * 0.25);
            let greedy = greedy_find_alpha_n(
                signal,
                cache,
                cfg.mode,
                a0,
                cfg.greedy_stop,
                cfg.greedy_cap,
            )?;
            if greedy.n == 0 {
                return Err(Error::InvalidInput(
                    greedy
                        .diagnostic
                        .clone()
                        .unwrap_or_else(|| "greedy selection found no sources".into()),
                ));
            }
            Ok((greedy.z, Some(greedy)))
        }
    }
}

/// Runs a fixed-count fit.
pub fn fit_explicit(
    signal: &SampledSignal,
    irf: &IrfModel,
    cfg: &PipelineConfig,
    n: usize,
    progress: impl FnMut(usize, f64),
) -> Result<FitOutcome> {
    let cache = IrfCache::new(irf, &signal.grid)?;
    let alpha0 = match &cfg.selection {
        NSelection::Auto { alpha0, .. } => *alpha0,
        _ => None,
    };
    let (z, greedy) = estimate_z(signal, &cache, cfg, alpha0)?;
    let alpha = z / n as f64;
    let mut ga = cfg.ga.clone();
    if ga.noise_floor.is_none() {
        ga.noise_floor = cfg.noise_power;
    }
    let run = run_with_progress(signal, &cache, n, alpha, cfg.mode, &ga, progress)?;
    let solution = run.solution.clone();
    let alpha = solution.alpha;
    Ok(FitOutcome {
        n: solution.n(),
        z: solution.total_intensity(),
        alpha,
        solution,
        run,
        n_op: None,
        bound: None,
        prelim: None,
        greedy,
        support: None,
        chi2_ceiling: None,
    })
}

/// Runs the full auto-selection pipeline.
pub fn fit_auto(
    signal: &SampledSignal,
    irf: &IrfModel,
    cfg: &PipelineConfig,
    g_auto: Option<&crate::bounds::Autocorr>,
    mut progress: impl FnMut(&str, usize, f64),
) -> Result<FitOutcome> {
    let cache = IrfCache::new(irf, &signal.grid)?;
    let noise_power = cfg.noise_power.ok_or_else(|| {
        Error::InvalidInput("auto selection needs the expected noise power".into())
    })?;
    let (alpha0, prelim_n) = match &cfg.selection {
        NSelection::Auto { alpha0, prelim_n } => (*alpha0, prelim_n.unwrap_or(100)),
        NSelection::Explicit { n } => (None, *n),
    };
    let (z, greedy) = estimate_z(signal, &cache, cfg, alpha0)?;

    // Initial count: the greedy count in unknown-background mode, the
    // intensity relation otherwise.
    let n0 = match (&greedy, alpha0) {
        (Some(g), _) => g.n,
        (None, Some(a0)) => ((z / a0).round() as usize).max(1),
        (None, None) => prelim_n,
    };

    let mut prelim_ga = cfg.ga.clone();
    prelim_ga.max_generations = cfg.prelim_generations;
    prelim_ga.seed = cfg.ga.seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    if prelim_ga.noise_floor.is_none() {
        prelim_ga.noise_floor = Some(noise_power);
    }
    let prelim = run_with_progress(
        signal,
        &cache,
        n0,
        z / n0 as f64,
        cfg.mode,
        &prelim_ga,
        |g, c| progress("prelim", g, c),
    )?;

    let support = crate::bounds::estimate_support(
        &prelim.solution,
        &signal.grid,
        cfg.histogram_policy,
    )?;
    let z_est = if cfg.mode == BackgroundMode::UnknownConstant {
        // The intensity refit updates alpha; keep Z consistent with it.
        prelim.solution.total_intensity()
    } else {
        z
    };
    let inputs = {
        let mut b = BoundInputs::new(&cache, cfg.mode, &support.truth, noise_power, z_est)
            .with_epsilon(cfg.epsilon);
        if let Some(g) = g_auto {
            b = b.with_autocorr(g);
        }
        b
    };
    let bound = estimate_optimum(&inputs)?;
    let n_op = bound.n_op;

    let alpha_final = z_est / n_op as f64;
    let mut ga = cfg.ga.clone();
    if ga.noise_floor.is_none() {
        ga.noise_floor = Some(noise_power);
    }
    let run = run_with_progress(signal, &cache, n_op, alpha_final, cfg.mode, &ga, |g, c| {
        progress("final", g, c)
    })?;
    let chi2_ceiling = Some(crate::bounds::chi2_bound(&inputs, run.solution.alpha));
    let solution = run.solution.clone();
    Ok(FitOutcome {
        n: solution.n(),
        z: solution.total_intensity(),
        alpha: solution.alpha,
        solution,
        run,
        n_op: Some(n_op),
        bound: Some(bound),
        prelim: Some(prelim),
        greedy,
        support: Some(support),
        chi2_ceiling,
    })
}

/// Dispatches on the configured selection mode.
pub fn fit(
    signal: &SampledSignal,
    irf: &IrfModel,
    cfg: &PipelineConfig,
    g_auto: Option<&crate::bounds::Autocorr>,
    mut progress: impl FnMut(&str, usize, f64),
) -> Result<FitOutcome> {
    match cfg.selection {
        NSelection::Explicit { n } => {
            fit_explicit(signal, irf, cfg, n, |g, c| progress("final", g, c))
        }
        NSelection::Auto { .. } => fit_auto(signal, irf, cfg, g_auto, progress),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::evaluate_model;
    use crate::grid::PixelGrid;
    use crate::irf::IrfFamily;

    fn toy_irf(grid: &PixelGrid) -> IrfModel {
        IrfModel::new(
            IrfFamily::Asymmetric1D {
                a1: 1.0,
                b1: 0.9,
                b2: 0.9,
            },
            [grid.pitch()[0], 1.0],
        )
        .unwrap()
        .normalize_on(grid)
        .unwrap()
    }

    #[test]
    fn explicit_fit_recovers_single_source() {
        let grid = PixelGrid::new_1d(48, 1.0, 0.0).unwrap();
        let irf = toy_irf(&grid);
        let cache = IrfCache::new(&irf, &grid).unwrap();
        let truth = SourceSet::new(vec![[23.0, 0.0]], 7.0).unwrap();
        let signal = evaluate_model(&truth, &cache, BackgroundMode::None);
        let cfg = PipelineConfig {
            mode: BackgroundMode::None,
            selection: NSelection::Explicit { n: 1 },
            ga: GaConfig {
                population: 20,
                max_generations: 400,
                seed: 5,
                ..GaConfig::default()
            },
            noise_power: Some(0.0),
            ..PipelineConfig::default()
        };
        let out = fit(&signal, &irf, &cfg, None, |_, _, _| {}).unwrap();
        assert_eq!(out.n, 1);
        let err = (out.solution.positions[0][0] - 23.0).abs();
        assert!(err < 0.125, "position error {err}");
        assert!((out.alpha - 7.0).abs() < 1e-6);
    }

    #[test]
    fn auto_and_explicit_produce_identical_final_runs() {
        let grid = PixelGrid::new_1d(64, 1.0, 0.0).unwrap();
        let irf = toy_irf(&grid);
        let cache = IrfCache::new(&irf, &grid).unwrap();
        let truth = SourceSet::new(vec![[25.0, 0.0], [27.5, 0.0], [40.0, 0.0]], 6.0).unwrap();
        let mut signal = evaluate_model(&truth, &cache, BackgroundMode::None);
        // Deterministic pseudo-noise so the budget has something to bound.
        for (i, v) in signal.values.iter_mut().enumerate() {
            *v += 0.05 * ((i as f64 * 2.39).sin());
        }
        let noise_power = 0.05f64 * 0.05 * 0.5 * 64.0;
        let cfg = PipelineConfig {
            mode: BackgroundMode::SubtractedKnown,
            selection: NSelection::Auto {
                alpha0: None,
                prelim_n: Some(12),
            },
            ga: GaConfig {
                population: 24,
                max_generations: 300,
                seed: 42,
                ..GaConfig::default()
            },
            prelim_generations: 200,
            noise_power: Some(noise_power),
            ..PipelineConfig::default()
        };
        let auto = fit(&signal, &irf, &cfg, None, |_, _, _| {}).unwrap();
        let n_op = auto.n_op.unwrap();

        let explicit_cfg = PipelineConfig {
            selection: NSelection::Explicit { n: n_op },
            ..cfg.clone()
        };
        let explicit = fit(&signal, &irf, &explicit_cfg, None, |_, _, _| {}).unwrap();
        assert_eq!(auto.solution.positions, explicit.solution.positions);
        assert_eq!(auto.alpha.to_bits(), explicit.alpha.to_bits());
        assert_eq!(auto.run.chi2.to_bits(), explicit.run.chi2.to_bits());
    }
}
