//! Virtual point-source clouds and discrete ground-truth distributions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Point;

/// A set of `N` virtual point sources of common intensity `alpha`.
///
/// Positions are unconstrained reals; repetitions are allowed and positions
/// may drift slightly outside the target grid during optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSet {
    pub positions: Vec<Point>,
    pub alpha: f64,
}

impl SourceSet {
    pub fn new(positions: Vec<Point>, alpha: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidSources("need at least one source".into()));
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidSources(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self { positions, alpha })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    /// Total fitted intensity `Z = alpha * N`, the invariant traded between
    /// source count and per-source intensity.
    pub fn total_intensity(&self) -> f64 {
        self.alpha * self.n() as f64
    }
}

/// A discrete source distribution: `m` support points with positive
/// intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub positions: Vec<Point>,
    pub intensities: Vec<f64>,
}

impl GroundTruth {
    pub fn new(positions: Vec<Point>, intensities: Vec<f64>) -> Result<Self> {
        if positions.is_empty() || positions.len() != intensities.len() {
            return Err(Error::InvalidSources(
                "ground truth needs matching, non-empty position/intensity lists".into(),
            ));
        }
        if intensities.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidSources("ground-truth intensities must be > 0".into()));
        }
        Ok(Self {
            positions,
            intensities,
        })
    }

    pub fn m(&self) -> usize {
        self.positions.len()
    }

    pub fn total_intensity(&self) -> f64 {
        self.intensities.iter().sum()
    }
}

/// Result of approximating a ground truth by integer multiples of `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGroundTruth {
    pub truth: GroundTruth,
    pub alpha: f64,
    /// Per-point source count `N_p` after redistribution.
    pub counts: Vec<usize>,
    /// Truncated intensities `N_p * alpha`.
    pub truncated: Vec<f64>,
    /// Residuals `truncated - intensity`.
    pub residuals: Vec<f64>,
}

impl TruncatedGroundTruth {
    /// Expands the per-point counts into a flat position list with
    /// repetitions, so that the truncated distribution can be rendered as a
    /// plain source set.
    pub fn expand(&self) -> SourceSet {
        let mut positions = Vec::with_capacity(self.counts.iter().sum());
        for (p, &c) in self.truth.positions.iter().zip(&self.counts) {
            positions.extend(std::iter::repeat(*p).take(c));
        }
        SourceSet {
            positions,
            alpha: self.alpha,
        }
    }
}

/// Rounds half away from zero, matching the bracket notation for the
/// nearest integer.
fn round_half_away(x: f64) -> f64 {
    x.round()
}

/// Approximates `gt` by integer multiples of `alpha` using `N` total
/// sources.
///
/// Each point first receives `N_p = round(R_p / alpha)` sources. If the
/// counts fall short of `N`, points are granted one extra source each in
/// decreasing order of the fractional part of `R_p / alpha` (ties broken by
/// lower index) until the total reaches `N`.
pub fn truncate_ground_truth(
    gt: &GroundTruth,
    alpha: f64,
    n: usize,
) -> Result<TruncatedGroundTruth> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidSources(format!("alpha must be > 0, got {alpha}")));
    }
    let mut counts: Vec<usize> = gt
        .intensities
        .iter()
        .map(|r| round_half_away(r / alpha) as usize)
        .collect();
    let mut total: usize = counts.iter().sum();

    if total > n {
        return Err(Error::TruncationInfeasible {
            needed: n,
            forced: total,
            deficit: total - n,
        });
    }

    if total < n {
        // Order indices by decreasing signed fraction q - round(q): points
        // whose count was rounded down come first, which keeps every
        // residual within alpha after the +1 adjustments.
        let mut order: Vec<usize> = (0..gt.m()).collect();
        let frac = |p: usize| {
            let q = gt.intensities[p] / alpha;
            q - round_half_away(q)
        };
        order.sort_by(|&a, &b| {
            frac(b)
                .partial_cmp(&frac(a))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut k = 0;
        while total < n {
            counts[order[k % order.len()]] += 1;
            total += 1;
            k += 1;
        }
    }

    let truncated: Vec<f64> = counts.iter().map(|&c| c as f64 * alpha).collect();
    let residuals: Vec<f64> = truncated
        .iter()
        .zip(&gt.intensities)
        .map(|(t, r)| t - r)
        .collect();

    Ok(TruncatedGroundTruth {
        truth: gt.clone(),
        alpha,
        counts,
        truncated,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_divisibility() {
        let gt = GroundTruth::new(vec![[0.0, 0.0]], vec![10.0]).unwrap();
        let t = truncate_ground_truth(&gt, 2.0, 5).unwrap();
        assert_eq!(t.counts, vec![5]);
        assert_eq!(t.truncated, vec![10.0]);
        assert_eq!(t.residuals, vec![0.0]);
    }

    #[test]
    fn fractional_redistribution_prefers_larger_fraction() {
        // 1000/300 = 3.33 (frac 0.33), 500/300 = 1.67 (frac 0.67):
        // rounding gives [3, 2] which already sums to 5.
        let gt = GroundTruth::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![1000.0, 500.0]).unwrap();
        let t = truncate_ground_truth(&gt, 300.0, 5).unwrap();
        assert_eq!(t.counts, vec![3, 2]);
        assert_eq!(t.truncated, vec![900.0, 600.0]);
    }

    #[test]
    fn plus_one_goes_to_most_rounded_down() {
        // 1000/320 = 3.125 -> 3 (signed fraction +0.125),
        // 500/320 = 1.5625 -> 2 (signed fraction -0.4375); total 5.
        // Asking for 6 sends the extra source to the rounded-down point.
        let gt = GroundTruth::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![1000.0, 500.0]).unwrap();
        let t = truncate_ground_truth(&gt, 320.0, 6).unwrap();
        assert_eq!(t.counts, vec![4, 2]);
    }

    #[test]
    fn conserves_total_count() {
        let gt = GroundTruth::new(
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]],
            vec![17.0, 23.5, 4.2, 81.3],
        )
        .unwrap();
        let forced: usize = gt.intensities.iter().map(|r| (r / 3.3).round() as usize).sum();
        for n in [forced, forced + 1, forced + 3, forced + 10] {
            let t = truncate_ground_truth(&gt, 3.3, n).unwrap();
            assert_eq!(t.counts.iter().sum::<usize>(), n);
            assert_eq!(t.expand().n(), n);
        }
    }

    #[test]
    fn rejects_infeasible_n() {
        let gt = GroundTruth::new(vec![[0.0, 0.0]], vec![10.0]).unwrap();
        let err = truncate_ground_truth(&gt, 1.0, 4).unwrap_err();
        match err {
            Error::TruncationInfeasible { deficit, .. } => assert_eq!(deficit, 6),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_nonpositive_alpha() {
        let gt = GroundTruth::new(vec![[0.0, 0.0]], vec![10.0]).unwrap();
        assert!(truncate_ground_truth(&gt, 0.0, 5).is_err());
        assert!(truncate_ground_truth(&gt, -1.0, 5).is_err());
    }

    #[test]
    fn residual_bound_before_redistribution() {
        let gt = GroundTruth::new(
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            vec![10.3, 7.9, 3.4],
        )
        .unwrap();
        let alpha = 2.1;
        // Pick N equal to the forced rounding so no +1 adjustments happen.
        let forced: usize = gt
            .intensities
            .iter()
            .map(|r| (r / alpha).round() as usize)
            .sum();
        let t = truncate_ground_truth(&gt, alpha, forced).unwrap();
        for r in &t.residuals {
            assert!(r.abs() <= alpha / 2.0 + 1e-12);
        }
    }

    #[test]
    fn residual_bound_after_redistribution() {
        // Consistent (alpha, N) pair: alpha = total intensity / N.
        let gt = GroundTruth::new(
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            vec![10.3, 7.9, 3.4],
        )
        .unwrap();
        for n in [7usize, 9, 11, 13] {
            let alpha = gt.total_intensity() / n as f64;
            let t = truncate_ground_truth(&gt, alpha, n).unwrap();
            assert_eq!(t.counts.iter().sum::<usize>(), n);
            for r in &t.residuals {
                assert!(r.abs() <= alpha + 1e-12, "n={n} residual {r} alpha {alpha}");
            }
        }
    }
}
