//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Args;
use serde::{Deserialize, Serialize};

use suppose::bounds::Autocorr;
use suppose::calibration::{
    calibrate, detect_spots, CalibrationInput, FamilyKind, RecordDiag,
};
use suppose::error::Error;
use suppose::eval::{
    histogram_sources, line_lobe_stats, matched_sigma, nearest_reference_rms, render_smoothed,
    superpixel_size, Line, LobeStats, SmoothKernel,
};
use suppose::forward::BackgroundMode;
use suppose::grid::SampledSignal;
use suppose::io;
use suppose::irf::IrfModel;
use suppose::pipeline::{fit, NSelection, PipelineConfig};
use suppose::sources::{truncate_ground_truth, GroundTruth, SourceSet};
use suppose::synth::{
    make_bead_scene, make_kr_triplet_scene, make_na_doublet_scene, make_two_line_scene,
    NoiseModel, Scenario,
};

use crate::manifest::RunManifest;
use crate::{EXIT_CEILING, EXIT_INPUT};

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn ensure_dir(dir: &Path) -> AnyResult<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// synth

#[derive(Args)]
pub struct SynthArgs {
    /// Built-in scene: two-line, na-doublet, kr-triplet or bead.
    #[arg(long, conflicts_with = "spec")]
    scene: Option<String>,
    /// Scenario specification JSON (round-trips unchanged).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Grid extent for the two-line scene.
    #[arg(long, default_value_t = 25)]
    extent: usize,
    /// Per-pixel noise std for the spectral scenes.
    #[arg(long, default_value_t = 13.0)]
    noise_std: f64,
}

pub fn run_synth(args: SynthArgs) -> AnyResult<ExitCode> {
    let scenario: Scenario = if let Some(spec) = &args.spec {
        io::load_json(spec)?
    } else {
        match args.scene.as_deref() {
            Some("two-line") => make_two_line_scene(args.extent, args.seed),
            Some("na-doublet") => make_na_doublet_scene(
                NoiseModel::Constant {
                    std: args.noise_std,
                },
                args.seed,
            ),
            Some("kr-triplet") => make_kr_triplet_scene(
                NoiseModel::Constant {
                    std: args.noise_std,
                },
                args.seed,
            ),
            Some("bead") => make_bead_scene(
                25,
                67.7,
                50.0,
                1.435,
                2.5e5,
                8000.0,
                NoiseModel::FloorPlusShot {
                    floor: 23.0,
                    scale: 1.0,
                },
                args.seed,
            ),
            Some(other) => {
                eprintln!("error: unknown scene '{other}'");
                return Ok(ExitCode::from(EXIT_INPUT));
            }
            None => {
                eprintln!("error: need --scene or --spec");
                return Ok(ExitCode::from(EXIT_INPUT));
            }
        }
    };
    ensure_dir(&args.out)?;
    let rendered = scenario.render()?;

    if scenario.grid.dim() == 1 {
        io::write_signal_csv(&args.out.join("signal.csv"), &rendered.signal)?;
    } else {
        io::write_image_pgm(&args.out.join("signal.pgm"), &rendered.signal)?;
    }
    write_truth_csv(&args.out.join("truth.csv"), &rendered.truth)?;
    io::save_json(&args.out.join("scenario.json"), &scenario)?;
    #[derive(Serialize)]
    struct SynthSummary {
        label: String,
        noise_power: f64,
        truth_total_intensity: f64,
        truth_points: usize,
    }
    io::save_json(
        &args.out.join("synth.json"),
        &SynthSummary {
            label: scenario.label.clone(),
            noise_power: rendered.noise_power,
            truth_total_intensity: rendered.truth.total_intensity(),
            truth_points: rendered.truth.m(),
        },
    )?;
    println!(
        "scene '{}' written to {} (noise power {:.6e})",
        scenario.label,
        args.out.display(),
        rendered.noise_power
    );
    Ok(ExitCode::SUCCESS)
}

fn write_truth_csv(path: &Path, truth: &GroundTruth) -> AnyResult<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "x,y,intensity")?;
    for (p, r) in truth.positions.iter().zip(&truth.intensities) {
        writeln!(w, "{},{},{}", p[0], p[1], r)?;
    }
    Ok(())
}

fn read_truth_csv(path: &Path) -> AnyResult<GroundTruth> {
    let text = fs::read_to_string(path)?;
    let mut positions = Vec::new();
    let mut intensities = Vec::new();
    for line in text.lines().skip(1) {
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() < 3 {
            continue;
        }
        if let (Ok(x), Ok(y), Ok(r)) = (
            parts[0].parse::<f64>(),
            parts[1].parse::<f64>(),
            parts[2].parse::<f64>(),
        ) {
            positions.push([x, y]);
            intensities.push(r);
        }
    }
    Ok(GroundTruth::new(positions, intensities)?)
}

// ---------------------------------------------------------------------------
// calibrate

#[derive(Args)]
pub struct CalibrateArgs {
    /// Calibration record files (1-D CSV signals or 2-D PGM patches).
    #[arg(long, num_args = 1..)]
    records: Vec<PathBuf>,
    /// Directory of record files (all .csv / .pgm inside).
    #[arg(long)]
    records_dir: Option<PathBuf>,
    /// A full 2-D image to extract bright spots from.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Expected spot width (physical units) for spot detection.
    #[arg(long, default_value_t = 2.0)]
    spot_width: f64,
    #[arg(long, value_parser = ["asymmetric1d", "gaussian-halo2d"])]
    family: String,
    /// Acceptance range for the fitted per-record width.
    #[arg(long)]
    width_min: Option<f64>,
    #[arg(long)]
    width_max: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationManifest {
    pub tool_version: String,
    pub family: String,
    pub irf: IrfModel,
    pub d0: f64,
    pub fit_chi2: f64,
    pub width_range: Option<(f64, f64)>,
    pub diagnostics: Vec<RecordDiag>,
    pub autocorr: Autocorr,
    pub inputs: Vec<String>,
}

pub fn run_calibrate(args: CalibrateArgs) -> AnyResult<ExitCode> {
    let mut paths = args.records.clone();
    if let Some(dir) = &args.records_dir {
        let mut found: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                matches!(
                    p.extension().and_then(|s| s.to_str()),
                    Some("csv") | Some("pgm")
                )
            })
            .collect();
        found.sort();
        paths.extend(found);
    }
    let mut records: Vec<SampledSignal> = Vec::new();
    for p in &paths {
        match p.extension().and_then(|s| s.to_str()) {
            Some("csv") => records.push(io::read_signal_csv(p)?),
            Some("pgm") => records.push(io::read_image_pgm(p)?),
            _ => {
                eprintln!("error: unsupported record type: {}", p.display());
                return Ok(ExitCode::from(EXIT_INPUT));
            }
        }
    }
    if let Some(image_path) = &args.image {
        let image = io::read_image_pgm(image_path)?;
        let spots = detect_spots(&image, args.spot_width, 5.0);
        println!("detected {} spots in {}", spots.len(), image_path.display());
        records.extend(spots);
    }
    if records.is_empty() {
        eprintln!("error: no calibration records supplied");
        return Ok(ExitCode::from(EXIT_INPUT));
    }

    let family = match args.family.as_str() {
        "asymmetric1d" => FamilyKind::Asymmetric1D,
        _ => FamilyKind::GaussianHalo2D,
    };
    let width_range = match (args.width_min, args.width_max) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (Some(lo), None) => Some((lo, f64::INFINITY)),
        (None, Some(hi)) => Some((0.0, hi)),
        (None, None) => None,
    };
    let result = calibrate(&CalibrationInput {
        records,
        family,
        width_range,
    })?;

    ensure_dir(&args.out)?;
    io::write_grid_csv(&args.out.join("g.csv"), &result.residual)?;
    let g_signal = SampledSignal::new(
        result.autocorr.grid.clone(),
        result.autocorr.values.clone(),
        "autocorr",
    )?;
    io::write_grid_csv(&args.out.join("g_autocorr.csv"), &g_signal)?;
    let manifest = CalibrationManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        family: args.family.clone(),
        irf: result.irf.clone(),
        d0: result.d0,
        fit_chi2: result.fit_chi2,
        width_range,
        diagnostics: result.diagnostics.clone(),
        autocorr: result.autocorr.clone(),
        inputs: paths.iter().map(|p| p.display().to_string()).collect(),
    };
    io::save_json(&args.out.join("calibration.json"), &manifest)?;
    println!(
        "calibrated {} records: d0 = {:.4}, fit chi2 = {:.3e}",
        manifest.diagnostics.len(),
        manifest.d0,
        manifest.fit_chi2
    );
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// fit

#[derive(Args)]
pub struct FitArgs {
    /// Signal file: 1-D CSV or 2-D PGM.
    #[arg(long)]
    signal: PathBuf,
    /// Calibration manifest (fitted response plus residual autocorrelation).
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Scenario JSON: exact synthetic response and noise model.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Source count: "auto" or an integer.
    #[arg(long, default_value = "auto")]
    n: String,
    #[arg(long, value_parser = ["none", "subtracted", "constant-bg"], default_value = "subtracted")]
    mode: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trial per-source intensity for selection.
    #[arg(long)]
    alpha0: Option<f64>,
    /// Initial source count for the preliminary fit in auto mode.
    #[arg(long)]
    prelim_n: Option<usize>,
    /// Expected noise power over the fitted pixels.
    #[arg(long)]
    noise_power: Option<f64>,
    /// Estimate the noise power from the data: "floor,scale" per-pixel std.
    #[arg(long)]
    noise_model: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    generations: Option<usize>,
    /// Pipeline configuration JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Stream per-generation progress to stderr.
    #[arg(long)]
    progress: bool,
    /// Smoothed output kernel: "sphere:RADIUS" or "gauss:SIGMA".
    #[arg(long)]
    smooth: Option<String>,
    /// Also emit the superpixel histogram as a 16-bit PGM raster (2-D runs).
    #[arg(long)]
    raster: bool,
}

pub fn run_fit(args: FitArgs) -> AnyResult<ExitCode> {
    let signal = read_signal(&args.signal)?;

    // Response model and residual autocorrelation.
    let (irf, g_auto, scenario): (IrfModel, Option<Autocorr>, Option<Scenario>) =
        match (&args.calibration, &args.scenario) {
            (Some(cal), _) => {
                let manifest: CalibrationManifest = io::load_json(cal)?;
                (manifest.irf, Some(manifest.autocorr), None)
            }
            (None, Some(spec)) => {
                let scenario: Scenario = io::load_json(spec)?;
                (scenario.irf.clone(), None, Some(scenario))
            }
            (None, None) => {
                eprintln!("error: need --calibration or --scenario");
                return Ok(ExitCode::from(EXIT_INPUT));
            }
        };

    let mode = match args.mode.as_str() {
        "none" => BackgroundMode::None,
        "constant-bg" => BackgroundMode::UnknownConstant,
        _ => BackgroundMode::SubtractedKnown,
    };

    let mut cfg: PipelineConfig = match &args.config {
        Some(path) => io::load_json(path)?,
        None => PipelineConfig::default(),
    };
    cfg.mode = mode;
    cfg.ga.seed = args.seed;
    if let Some(g) = args.generations {
        cfg.ga.max_generations = g;
    }
    if let Some(e) = args.epsilon {
        cfg.epsilon = e;
    }
    cfg.selection = if args.n == "auto" {
        NSelection::Auto {
            alpha0: args.alpha0,
            prelim_n: args.prelim_n.or(Some(100)),
        }
    } else {
        match args.n.parse::<usize>() {
            Ok(n) if n >= 1 => NSelection::Explicit { n },
            _ => {
                eprintln!("error: --n must be 'auto' or a positive integer");
                return Ok(ExitCode::from(EXIT_INPUT));
            }
        }
    };

    // Noise power: explicit flag, scenario model, or per-pixel model.
    cfg.noise_power = args.noise_power.or(cfg.noise_power);
    if cfg.noise_power.is_none() {
        if let Some(scene) = &scenario {
            let rendered = scene.render()?;
            cfg.noise_power = Some(rendered.noise_power);
        }
    }
    if cfg.noise_power.is_none() {
        if let Some(model) = &args.noise_model {
            let parts: Vec<&str> = model.split(',').collect();
            if parts.len() != 2 {
                eprintln!("error: --noise-model expects 'floor,scale'");
                return Ok(ExitCode::from(EXIT_INPUT));
            }
            let floor: f64 = parts[0].trim().parse()?;
            let scale: f64 = parts[1].trim().parse()?;
            let nm = NoiseModel::FloorPlusShot { floor, scale };
            cfg.noise_power = Some(nm.expected_power(&signal));
        }
    }

    let progress = args.progress;
    let outcome = fit(&signal, &irf, &cfg, g_auto.as_ref(), |phase, g, c| {
        if progress {
            eprintln!("{phase} {g} {c:.6e}");
        }
    })?;

    ensure_dir(&args.out)?;
    let dim = signal.grid.dim();
    io::write_positions_csv(&args.out.join("positions.csv"), &outcome.solution.positions, dim)?;
    io::write_chi2_trace(&args.out.join("chi2_trace.csv"), &outcome.run.best_chi2)?;

    // Histogram at the superpixel implied by the budget (fall back to the
    // pixel pitch when no budget was computed).
    let d_p = signal.grid.pitch()[0];
    let d_s = outcome
        .bound
        .as_ref()
        .map(|b| superpixel_size(b.sigma_op, d_p))
        .unwrap_or(d_p);
    let hist = histogram_sources(&outcome.solution, &signal.grid, d_s);
    write_histogram_csv(&args.out.join("histogram.csv"), &hist, dim)?;
    if args.raster && dim == 2 {
        let raster = render_smoothed(
            &SourceSet::new(outcome.solution.positions.clone(), 1.0)?,
            &SmoothKernel::Delta,
            &raster_grid(&signal.grid, d_s)?,
        );
        io::write_image_pgm(&args.out.join("histogram.pgm"), &raster)?;
    }

    if let Some(smooth) = &args.smooth {
        let kernel = parse_kernel(smooth)?;
        let smoothed = render_smoothed(&outcome.solution, &kernel, &signal.grid);
        if dim == 1 {
            io::write_signal_csv(&args.out.join("smoothed.csv"), &smoothed)?;
        } else {
            io::write_image_pgm(&args.out.join("smoothed.pgm"), &smoothed)?;
        }
    }

    let mut manifest = RunManifest::new("fit", &cfg, &outcome);
    manifest.superpixel = Some(d_s);
    manifest.record_input(&args.signal);
    if let Some(cal) = &args.calibration {
        manifest.record_input(cal);
    }
    if let Some(spec) = &args.scenario {
        manifest.record_input(spec);
    }
    manifest.outputs = vec![
        "positions.csv".into(),
        "chi2_trace.csv".into(),
        "histogram.csv".into(),
    ];
    io::save_json(&args.out.join("manifest.json"), &manifest)?;

    println!(
        "fit: N = {}, alpha = {:.6}, chi2 = {:.6e} after {} generations ({:?})",
        outcome.n, outcome.alpha, outcome.run.chi2, outcome.run.generations, outcome.run.stop
    );
    if let (Some(n_op), Some(bound)) = (outcome.n_op, outcome.bound.as_ref()) {
        println!(
            "selection: N_op = {n_op}, sigma_op = {:.6}, M_s = {:.3}",
            bound.sigma_op, bound.m_s
        );
    }

    // Ceiling flag: ran out of generations above the noise floor. A zero
    // floor gets a floating-point allowance relative to the signal energy.
    if outcome.run.stop == suppose::ga::StopReason::MaxGenerations {
        if let Some(nf) = cfg.noise_power {
            let floor = nf + 1e-9 * signal.norm_sq();
            if outcome.run.chi2 > (1.0 + cfg.ga.noise_floor_margin) * floor {
                eprintln!(
                    "warning: generation ceiling reached at chi2 {:.3e} > {:.3e} noise floor",
                    outcome.run.chi2, nf
                );
                return Ok(ExitCode::from(EXIT_CEILING));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_signal(path: &Path) -> AnyResult<SampledSignal> {
    match path.extension().and_then(|s| s.to_str()) {
        Some("pgm") => Ok(io::read_image_pgm(path)?),
        _ => Ok(io::read_signal_csv(path)?),
    }
}

fn parse_kernel(spec: &str) -> AnyResult<SmoothKernel<'static>> {
    let mut parts = spec.splitn(2, ':');
    let kind = parts.next().unwrap_or("");
    let value: f64 = parts
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("bad kernel spec '{spec}'")))?
        .parse()?;
    match kind {
        "sphere" => Ok(SmoothKernel::Sphere { radius: value }),
        "gauss" => Ok(SmoothKernel::Gaussian { sigma: value }),
        other => Err(Box::new(Error::InvalidInput(format!(
            "unknown kernel '{other}'"
        )))),
    }
}

/// Output grid for the histogram raster: same physical span, superpixel
/// sized cells.
fn raster_grid(grid: &suppose::grid::PixelGrid, d_s: f64) -> AnyResult<suppose::grid::PixelGrid> {
    let [nx, ny] = grid.extents();
    let sx = ((nx as f64 * grid.pitch()[0]) / d_s).ceil() as usize;
    let sy = ((ny as f64 * grid.pitch()[1]) / d_s).ceil() as usize;
    Ok(suppose::grid::PixelGrid::new_2d(
        sx.max(1),
        sy.max(1),
        [d_s, d_s],
        grid.origin(),
    )?)
}

fn write_histogram_csv(
    path: &Path,
    hist: &suppose::eval::SourceHistogram,
    dim: usize,
) -> AnyResult<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    if dim == 1 {
        writeln!(w, "x,count,intensity")?;
        for b in &hist.bins {
            writeln!(w, "{},{},{}", b.center[0], b.count, b.intensity)?;
        }
    } else {
        writeln!(w, "x,y,count,intensity")?;
        for b in &hist.bins {
            writeln!(w, "{},{},{},{}", b.center[0], b.center[1], b.count, b.intensity)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Args)]
pub struct EvaluateArgs {
    /// Fitted positions CSV.
    #[arg(long)]
    solution: PathBuf,
    /// Per-source intensity of the solution (defaults from --manifest).
    #[arg(long)]
    alpha: Option<f64>,
    /// Fit manifest to pull alpha and the budget from.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Ground truth CSV (x,y,intensity).
    #[arg(long)]
    truth: PathBuf,
    /// Calibration manifest, for the response width.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Scenario JSON, as an alternative width source.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Analysis line pair "x,y,dx,dy;x,y,dx,dy" for lobe statistics.
    #[arg(long)]
    lines: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalManifest {
    pub tool_version: String,
    /// Matched position uncertainty against the truncated truth expansion,
    /// when the counts can be reconciled.
    pub sigma_matched: Option<f64>,
    pub matched_approximate: Option<bool>,
    /// Nearest-truth RMS diagnostic (defined for any source counts).
    pub nearest_rms: f64,
    pub n_fitted: usize,
    pub m_truth: usize,
    pub alpha: f64,
    pub d0: Option<f64>,
    /// Super-resolution factor from the matched uncertainty.
    pub m_s: Option<f64>,
    pub sigma_op: Option<f64>,
    pub bound_ratio: Option<f64>,
    pub lobe1: Option<LobeStats>,
    pub lobe2: Option<LobeStats>,
}

pub fn run_evaluate(args: EvaluateArgs) -> AnyResult<ExitCode> {
    let positions = io::read_positions_csv(&args.solution)?;
    let truth = read_truth_csv(&args.truth)?;

    let mut alpha = args.alpha;
    let mut sigma_op = None;
    if let Some(path) = &args.manifest {
        let manifest: RunManifest = io::load_json(path)?;
        alpha = alpha.or(Some(manifest.run.alpha));
        sigma_op = manifest.bound.as_ref().map(|b| b.sigma_op);
    }
    let alpha = alpha.ok_or_else(|| {
        Error::InvalidInput("need --alpha or --manifest for the solution intensity".into())
    })?;
    let solution = SourceSet::new(positions, alpha)?;

    let d0 = if let Some(cal) = &args.calibration {
        let manifest: CalibrationManifest = io::load_json(cal)?;
        Some(manifest.d0)
    } else if let Some(spec) = &args.scenario {
        let scenario: Scenario = io::load_json(spec)?;
        let cache = suppose::irf::IrfCache::new(&scenario.irf, &scenario.grid)?;
        Some(cache.d0)
    } else {
        None
    };

    // Matched uncertainty against the truncated truth, when feasible.
    let matched = truncate_ground_truth(&truth, alpha, solution.n())
        .ok()
        .and_then(|t| matched_sigma(&t.expand(), &solution).ok());
    let nearest = nearest_reference_rms(&truth.positions, &solution.positions);

    let lobes = match &args.lines {
        Some(spec) => {
            let parsed = parse_lines(spec)?;
            let (a, b) = line_lobe_stats(&solution, parsed.0, parsed.1)?;
            (Some(a), Some(b))
        }
        None => (None, None),
    };

    let sigma_matched = matched.as_ref().map(|m| m.sigma);
    let manifest = EvalManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        sigma_matched,
        matched_approximate: matched.as_ref().map(|m| m.approximate),
        nearest_rms: nearest,
        n_fitted: solution.n(),
        m_truth: truth.m(),
        alpha,
        d0,
        m_s: match (d0, sigma_matched) {
            (Some(d0), Some(s)) if s > 0.0 => Some(d0 / (2.0 * s)),
            _ => None,
        },
        sigma_op,
        bound_ratio: match (sigma_op, sigma_matched) {
            (Some(b), Some(s)) if s > 0.0 => Some(b / s),
            _ => None,
        },
        lobe1: lobes.0,
        lobe2: lobes.1,
    };
    ensure_dir(&args.out)?;
    io::save_json(&args.out.join("eval.json"), &manifest)?;
    println!(
        "evaluate: nearest-truth rms {:.6}{}",
        nearest,
        manifest
            .sigma_matched
            .map(|s| format!(", matched sigma {s:.6}"))
            .unwrap_or_default()
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_lines(spec: &str) -> AnyResult<(Line, Line)> {
    let parts: Vec<&str> = spec.split(';').collect();
    if parts.len() != 2 {
        return Err(Box::new(Error::InvalidInput(
            "expected two lines separated by ';'".into(),
        )));
    }
    let mut lines = Vec::new();
    for part in parts {
        let vals: Vec<f64> = part
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()?;
        if vals.len() != 4 {
            return Err(Box::new(Error::InvalidInput(
                "each line needs x,y,dx,dy".into(),
            )));
        }
        lines.push(Line {
            point: [vals[0], vals[1]],
            dir: [vals[2], vals[3]],
        });
    }
    Ok((lines[0], lines[1]))
}
