//! Fit objective: squared 2-norm misfit, its fitness transform, and the
//! closed-form intensity refit used in the unknown-background case.

use crate::error::{Error, Result};
use crate::forward::{accumulate_sources, BackgroundMode};
use crate::grid::SampledSignal;
use crate::irf::IrfCache;
use crate::sources::SourceSet;

/// Everything a misfit evaluation needs: the working signal (already
/// mean-subtracted when the background is unknown), the response cache and
/// the background mode.
pub struct ObjectiveContext<'a> {
    pub target: SampledSignal,
    pub cache: &'a IrfCache,
    pub mode: BackgroundMode,
    /// Fitness offset; see [`fitness`].
    pub c0: f64,
}

impl<'a> ObjectiveContext<'a> {
    /// Builds a context from the raw signal, subtracting its mean when the
    /// background is an unknown constant.
    pub fn new(signal: &SampledSignal, cache: &'a IrfCache, mode: BackgroundMode) -> Result<Self> {
        if signal.grid != cache.grid {
            return Err(Error::GridMismatch(
                "signal grid does not match the IRF cache grid".into(),
            ));
        }
        let target = if mode.uses_dev() {
            signal.mean_subtracted()
        } else {
            signal.clone()
        };
        Ok(Self {
            target,
            cache,
            mode,
            c0: 0.0,
        })
    }

    pub fn with_fitness_offset(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self
    }

    /// Misfit of a unit-intensity field against the target for a given
    /// intensity. Used by the solver, which keeps per-individual fields.
    pub fn chi_squared_from_field(&self, field: &[f64], n_sources: usize, alpha: f64) -> f64 {
        let offset = if self.mode.uses_dev() {
            n_sources as f64 * self.cache.mean
        } else {
            0.0
        };
        let mut acc = 0.0;
        for (t, f) in self.target.values.iter().zip(field) {
            let r = t - alpha * (f - offset);
            acc += r * r;
        }
        acc
    }

    /// Intensity that minimizes the misfit for a fixed unit field, together
    /// with the squared norm of the basis.
    pub fn refit_alpha_from_field(&self, field: &[f64], n_sources: usize) -> Result<(f64, f64)> {
        let offset = if self.mode.uses_dev() {
            n_sources as f64 * self.cache.mean
        } else {
            0.0
        };
        let mut num = 0.0;
        let mut den = 0.0;
        let mut usum = 0.0;
        for (t, f) in self.target.values.iter().zip(field) {
            let u = f - offset;
            num += u * t;
            den += u * u;
            usum += u;
        }
        let n = self.target.values.len() as f64;
        // Against a mean-free target only the centered part of the basis
        // carries information, so that is what decides degeneracy.
        let effective = if self.mode.uses_dev() {
            let ubar = usum / n;
            field
                .iter()
                .map(|f| {
                    let d = f - offset - ubar;
                    d * d
                })
                .sum()
        } else {
            den
        };
        if effective < 1e-30 * n {
            return Err(Error::DegenerateBasis(
                "model basis is numerically zero on the grid (all sources outside the field?)"
                    .into(),
            ));
        }
        Ok((num / den, den))
    }
}

/// Squared 2-norm misfit between the working signal and the rendered model.
pub fn chi_squared(sources: &SourceSet, ctx: &ObjectiveContext) -> f64 {
    let mut field = vec![0.0; ctx.cache.grid.len()];
    accumulate_sources(ctx.cache, &sources.positions, &mut field);
    ctx.chi_squared_from_field(&field, sources.n(), sources.alpha)
}

/// Fitness transform `1 / (chi2 + c0)`: strictly decreasing in the misfit.
pub fn fitness(chi2: f64, c0: f64) -> f64 {
    1.0 / (chi2 + c0)
}

/// Closed-form least-squares intensity for fixed positions in the
/// unknown-background case.
pub fn refit_alpha(sources: &SourceSet, ctx: &ObjectiveContext) -> Result<f64> {
    let mut field = vec![0.0; ctx.cache.grid.len()];
    accumulate_sources(ctx.cache, &sources.positions, &mut field);
    ctx.refit_alpha_from_field(&field, sources.n())
        .map(|(alpha, _)| alpha)
}
