//! Forward model: render a source cloud through the instrument response.

use serde::{Deserialize, Serialize};

use crate::grid::SampledSignal;
use crate::irf::IrfCache;
use crate::sources::SourceSet;

/// How the acquisition background is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackgroundMode {
    /// No background present.
    None,
    /// Background measured and already subtracted from the signal.
    SubtractedKnown,
    /// Constant unknown background: all model and objective evaluations use
    /// the mean-subtracted signal and response.
    UnknownConstant,
}

impl BackgroundMode {
    /// True when the mean-subtracted working quantities apply.
    pub fn uses_dev(&self) -> bool {
        matches!(self, BackgroundMode::UnknownConstant)
    }
}

/// Accumulates the unit-intensity field `sum_k I(x_i - a_k)` into `field`.
pub fn accumulate_sources(cache: &IrfCache, positions: &[[f64; 2]], field: &mut [f64]) {
    for p in positions {
        cache.accumulate_stamp(field, *p, 1.0);
    }
}

/// Converts an accumulated unit field into model values under `mode`.
///
/// For the mean-subtracted variant the per-source grid mean is removed once
/// per source: `alpha * (field_i - N * mean)`.
pub fn field_to_model(
    cache: &IrfCache,
    field: &[f64],
    n_sources: usize,
    alpha: f64,
    mode: BackgroundMode,
    out: &mut [f64],
) {
    let offset = if mode.uses_dev() {
        n_sources as f64 * cache.mean
    } else {
        0.0
    };
    for (o, f) in out.iter_mut().zip(field) {
        *o = alpha * (f - offset);
    }
}

/// Renders the model signal for a source set.
pub fn evaluate_model(sources: &SourceSet, cache: &IrfCache, mode: BackgroundMode) -> SampledSignal {
    let mut field = vec![0.0; cache.grid.len()];
    accumulate_sources(cache, &sources.positions, &mut field);
    let mut values = vec![0.0; field.len()];
    field_to_model(cache, &field, sources.n(), sources.alpha, mode, &mut values);
    SampledSignal {
        grid: cache.grid.clone(),
        values,
        label: "model".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PixelGrid;
    use crate::irf::{IrfFamily, IrfModel};

    fn gaussian_cache(nx: usize, ny: usize) -> IrfCache {
        let grid = PixelGrid::new_2d(nx, ny, [1.0, 1.0], [0.0, 0.0]).unwrap();
        let sigma = 1.435f64;
        let irf = IrfModel::new(
            IrfFamily::GaussianHalo2D {
                b1: 1.0,
                d1: 1.0 / (2.0 * sigma * sigma),
                b2: 0.0,
                d2: 1.0,
                rho0: 0.0,
            },
            [1.0, 1.0],
        )
        .unwrap();
        let irf = irf.normalize_on(&grid).unwrap();
        IrfCache::new(&irf, &grid).unwrap()
    }

    #[test]
    fn single_source_at_node_is_shifted_samples() {
        let cache = gaussian_cache(21, 21);
        let node = cache.grid.coord(14, 9);
        let sources = SourceSet::new(vec![node], 1.0).unwrap();
        let model = evaluate_model(&sources, &cache, BackgroundMode::None);
        // Compare against the cached samples, shifted from the center pixel
        // to the node.
        let (cx, cy) = cache.grid.center_pixel();
        let (sx, sy) = (14i64 - cx as i64, 9i64 - cy as i64);
        for iy in 0..21i64 {
            for ix in 0..21i64 {
                let (jx, jy) = (ix - sx, iy - sy);
                if jx < 0 || jy < 0 || jx >= 21 || jy >= 21 {
                    continue;
                }
                let got = model.values[cache.grid.index_of(ix as usize, iy as usize)];
                let expect = cache.samples[cache.grid.index_of(jx as usize, jy as usize)];
                assert!(
                    (got - expect).abs() < 1e-12,
                    "pixel ({ix},{iy}): {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn two_sources_at_same_position_double_the_field() {
        let cache = gaussian_cache(17, 17);
        let p = [7.3, 9.8];
        let one = evaluate_model(
            &SourceSet::new(vec![p], 2.5).unwrap(),
            &cache,
            BackgroundMode::None,
        );
        let two = evaluate_model(
            &SourceSet::new(vec![p, p], 2.5).unwrap(),
            &cache,
            BackgroundMode::None,
        );
        for (a, b) in one.values.iter().zip(&two.values) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn linearity_over_union_of_source_sets() {
        let cache = gaussian_cache(19, 19);
        let a = SourceSet::new(vec![[4.0, 5.5], [9.2, 9.0]], 1.3).unwrap();
        let b = SourceSet::new(vec![[12.7, 3.3], [6.1, 14.9], [9.0, 9.0]], 1.3).unwrap();
        let mut union = a.positions.clone();
        union.extend_from_slice(&b.positions);
        let u = SourceSet::new(union, 1.3).unwrap();
        let ma = evaluate_model(&a, &cache, BackgroundMode::None);
        let mb = evaluate_model(&b, &cache, BackgroundMode::None);
        let mu = evaluate_model(&u, &cache, BackgroundMode::None);
        for i in 0..mu.values.len() {
            let s = ma.values[i] + mb.values[i];
            assert!((mu.values[i] - s).abs() <= 1e-10 * s.abs().max(1e-300));
        }
    }

    #[test]
    fn full_pixel_shift_moves_model_by_one_pixel() {
        let cache = gaussian_cache(23, 23);
        let base = SourceSet::new(vec![[8.2, 11.7], [10.9, 10.1]], 1.0).unwrap();
        let shifted = SourceSet::new(
            base.positions.iter().map(|p| [p[0] + 1.0, p[1]]).collect(),
            1.0,
        )
        .unwrap();
        let m0 = evaluate_model(&base, &cache, BackgroundMode::None);
        let m1 = evaluate_model(&shifted, &cache, BackgroundMode::None);
        // Interior pixels: m1[ix] == m0[ix-1].
        for iy in 3..20 {
            for ix in 3..20 {
                let a = m1.values[cache.grid.index_of(ix, iy)];
                let b = m0.values[cache.grid.index_of(ix - 1, iy)];
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn dev_mode_model_sums_to_zero() {
        let cache = gaussian_cache(25, 25);
        let sources = SourceSet::new(vec![[12.1, 12.4], [11.0, 13.2], [13.3, 11.8]], 7.0).unwrap();
        let m = evaluate_model(&sources, &cache, BackgroundMode::UnknownConstant);
        let tol = 1e-9 * sources.n() as f64 * sources.alpha;
        assert!(m.sum().abs() <= tol, "sum {} tol {}", m.sum(), tol);
    }
}
