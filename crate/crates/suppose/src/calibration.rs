//! Response calibration from repeated point-like source measurements:
//! co-centering, pooled family fits, and the fit-residual autocorrelation
//! that feeds the uncertainty budget.

use serde::{Deserialize, Serialize};

use crate::bounds::Autocorr;
use crate::error::{Error, Result};
use crate::grid::{PixelGrid, Point, SampledSignal};
use crate::irf::{IrfFamily, IrfModel};
use crate::lsq::{levenberg_marquardt, LmOptions};

/// Which parametric family to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Asymmetric1D,
    GaussianHalo2D,
}

/// Calibration input: one patch per point-like source.
#[derive(Debug, Clone)]
pub struct CalibrationInput {
    pub records: Vec<SampledSignal>,
    pub family: FamilyKind,
    /// Accepted per-record width range (physical units); records outside
    /// are excluded from the pooled fit (multi-source patches).
    pub width_range: Option<(f64, f64)>,
}

/// Per-record diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordDiag {
    pub label: String,
    pub sum: f64,
    pub center: Point,
    pub width: f64,
    pub background: f64,
    pub accepted: bool,
}

/// A record after background handling, unit-sum normalization and
/// co-centering; samples live on shifted continuous coordinates.
#[derive(Debug, Clone)]
pub struct CenteredRecord {
    pub coords: Vec<Point>,
    pub values: Vec<f64>,
    pub pitch: [f64; 2],
    pub extents: [usize; 2],
    pub dim: usize,
    pub diag: RecordDiag,
}

/// Full calibration output.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub irf: IrfModel,
    pub d0: f64,
    /// Pooled fit residual on the pixel-pitch lag grid.
    pub residual: SampledSignal,
    pub autocorr: Autocorr,
    pub diagnostics: Vec<RecordDiag>,
    pub fit_chi2: f64,
}

/// Lamp-normalization of a raw spectrum: `(S - B) / (S_lamp - B)`.
pub fn normalize_spectrum(
    s: &SampledSignal,
    lamp: &SampledSignal,
    dark: &SampledSignal,
) -> Result<SampledSignal> {
    if s.grid != lamp.grid || s.grid != dark.grid {
        return Err(Error::GridMismatch(
            "spectrum, lamp and dark must share a grid".into(),
        ));
    }
    let mut bad = Vec::new();
    let mut values = Vec::with_capacity(s.values.len());
    for i in 0..s.values.len() {
        let denom = lamp.values[i] - dark.values[i];
        if denom <= 0.0 {
            bad.push(i);
            values.push(0.0);
        } else {
            values.push((s.values[i] - dark.values[i]) / denom);
        }
    }
    if !bad.is_empty() {
        let shown: Vec<String> = bad.iter().take(8).map(|i| i.to_string()).collect();
        return Err(Error::InvalidInput(format!(
            "lamp minus dark is nonpositive at {} pixels (first: {})",
            bad.len(),
            shown.join(", ")
        )));
    }
    SampledSignal::new(s.grid.clone(), values, format!("{}_norm", s.label))
}

fn centroid_and_width(record: &SampledSignal) -> (Point, f64) {
    let mut w = 0.0;
    let mut cx = [0.0, 0.0];
    for (i, x) in record.grid.centers().enumerate() {
        let v = record.values[i].max(0.0);
        w += v;
        cx[0] += v * x[0];
        cx[1] += v * x[1];
    }
    cx[0] /= w;
    cx[1] /= w;
    let mut var = [0.0, 0.0];
    for (i, x) in record.grid.centers().enumerate() {
        let v = record.values[i].max(0.0);
        var[0] += v * (x[0] - cx[0]) * (x[0] - cx[0]);
        var[1] += v * (x[1] - cx[1]) * (x[1] - cx[1]);
    }
    var[0] /= w;
    var[1] /= w;
    let width = if record.grid.dim() == 1 {
        var[0].sqrt()
    } else {
        (0.5 * (var[0] + var[1])).sqrt()
    };
    (cx, width)
}

/// Fits one 2-D record with an isotropic Gaussian peak plus a constant
/// background; returns `(amp, cx, cy, sigma, bg, chi2)`.
fn fit_record_gaussian(record: &SampledSignal) -> Result<(f64, Point, f64, f64, f64)> {
    let (c0, w0) = centroid_and_width(record);
    let amp0 = record.max_value() - record.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let bg0 = record.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let w0 = w0.max(record.grid.pitch()[0] * 0.5);
    let theta0 = [amp0.max(1e-12), c0[0], c0[1], 1.0 / (2.0 * w0 * w0), bg0];
    let coords: Vec<Point> = record.grid.centers().collect();
    let n = coords.len();
    let fit = levenberg_marquardt(n, &theta0, &LmOptions::default(), |t, r, j| {
        if t[3] <= 0.0 {
            return false;
        }
        for (i, x) in coords.iter().enumerate() {
            let dx = x[0] - t[1];
            let dy = x[1] - t[2];
            let rho_sq = dx * dx + dy * dy;
            let e = (-rho_sq * t[3]).exp();
            r[i] = record.values[i] - (t[0] * e + t[4]);
            j[i * 5] = -e;
            j[i * 5 + 1] = -t[0] * e * 2.0 * t[3] * dx;
            j[i * 5 + 2] = -t[0] * e * 2.0 * t[3] * dy;
            j[i * 5 + 3] = t[0] * e * rho_sq;
            j[i * 5 + 4] = -1.0;
        }
        true
    })?;
    let sigma = (1.0 / (2.0 * fit.params[3])).sqrt();
    Ok((
        fit.params[0],
        [fit.params[1], fit.params[2]],
        sigma,
        fit.params[4],
        fit.chi2,
    ))
}

/// Shifts every record to a common origin and normalizes it to unit sum.
///
/// 1-D records are centered on their intensity centroid; 2-D records are
/// individually fit with a Gaussian peak plus constant background, the
/// background is removed and the fitted peak becomes the origin.
pub fn cocenter_normalize(records: &[SampledSignal]) -> Result<Vec<CenteredRecord>> {
    if records.is_empty() {
        return Err(Error::Calibration("no calibration records".into()));
    }
    let dim = records[0].grid.dim();
    let pitch = records[0].grid.pitch();
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        if rec.grid.dim() != dim {
            return Err(Error::GridMismatch("records mix dimensions".into()));
        }
        if (rec.grid.pitch()[0] - pitch[0]).abs() > 1e-12 * pitch[0] {
            return Err(Error::GridMismatch("records mix pixel pitches".into()));
        }
        let (center, background) = if dim == 1 {
            let sum = rec.sum();
            if !(sum > 0.0) {
                return Err(Error::Calibration(format!(
                    "record '{}' has nonpositive sum",
                    rec.label
                )));
            }
            let (c, _) = centroid_and_width(rec);
            (c, 0.0)
        } else {
            let (_, c, _, bg, _) = fit_record_gaussian(rec)?;
            (c, bg)
        };
        let shifted: Vec<f64> = rec.values.iter().map(|v| v - background).collect();
        let sum: f64 = shifted.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::Calibration(format!(
                "record '{}' has nonpositive background-subtracted sum",
                rec.label
            )));
        }
        let values: Vec<f64> = shifted.iter().map(|v| v / sum).collect();
        let coords: Vec<Point> = rec
            .grid
            .centers()
            .map(|x| [x[0] - center[0], if dim == 1 { 0.0 } else { x[1] - center[1] }])
            .collect();
        let tmp = SampledSignal::new(rec.grid.clone(), values.clone(), "centered")?;
        let (_, width) = centroid_and_width(&tmp);
        out.push(CenteredRecord {
            coords,
            values,
            pitch,
            extents: rec.grid.extents(),
            dim,
            diag: RecordDiag {
                label: rec.label.clone(),
                sum: rec.sum(),
                center,
                width,
                background,
                accepted: true,
            },
        });
    }
    Ok(out)
}

fn pooled_points(records: &[CenteredRecord]) -> (Vec<Point>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in records {
        if !r.diag.accepted {
            continue;
        }
        xs.extend_from_slice(&r.coords);
        ys.extend_from_slice(&r.values);
    }
    (xs, ys)
}

fn fit_asymmetric(xs: &[Point], ys: &[f64]) -> Result<(Vec<f64>, f64)> {
    let peak = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Width from the second moment of the pooled samples.
    let wsum: f64 = ys.iter().map(|y| y.max(0.0)).sum();
    let mean: f64 = xs.iter().zip(ys).map(|(x, y)| x[0] * y.max(0.0)).sum::<f64>() / wsum;
    let var: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x[0] - mean) * (x[0] - mean) * y.max(0.0))
        .sum::<f64>()
        / wsum;
    let sigma = var.sqrt().max(1e-6);
    let b0 = std::f64::consts::PI / (2.0 * sigma);
    let a0 = 2.0 * peak;
    let starts = [
        [a0, b0, b0],
        [a0, 1.5 * b0, 0.75 * b0],
        [a0, 0.75 * b0, 1.5 * b0],
        [a0, 0.5 * b0, 0.5 * b0],
    ];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let fit = levenberg_marquardt(ys.len(), &start, &LmOptions::default(), |t, r, j| {
            if t[1] <= 0.0 || t[2] <= 0.0 {
                return false;
            }
            for (i, x) in xs.iter().enumerate() {
                let e1 = (t[1] * x[0]).exp();
                let e2 = (-t[2] * x[0]).exp();
                let denom = e1 + e2;
                if !denom.is_finite() {
                    r[i] = ys[i];
                    j[i * 3] = 0.0;
                    j[i * 3 + 1] = 0.0;
                    j[i * 3 + 2] = 0.0;
                    continue;
                }
                let inv = 1.0 / denom;
                r[i] = ys[i] - t[0] * inv;
                j[i * 3] = -inv;
                j[i * 3 + 1] = t[0] * x[0] * e1 * inv * inv;
                j[i * 3 + 2] = -t[0] * x[0] * e2 * inv * inv;
            }
            true
        });
        if let Ok(f) = fit {
            if best.as_ref().map(|(_, c)| f.chi2 < *c).unwrap_or(true) {
                best = Some((f.params, f.chi2));
            }
        }
    }
    best.ok_or_else(|| Error::NoConvergence("asymmetric family fit failed from all starts".into()))
}

fn fit_gaussian_halo(xs: &[Point], ys: &[f64]) -> Result<(Vec<f64>, f64)> {
    let peak = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let wsum: f64 = ys.iter().map(|y| y.max(0.0)).sum();
    let mut var = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        var += (x[0] * x[0] + x[1] * x[1]) * y.max(0.0);
    }
    // Per-axis variance: half the radial second moment.
    let sigma = (0.5 * var / wsum).sqrt().max(1e-6);
    let d1 = 1.0 / (2.0 * sigma * sigma);
    let starts = [
        [peak, d1, 0.0, d1, 2.0 * sigma],
        [peak, 1.3 * d1, 0.02 * peak, d1, 1.5 * sigma],
        [peak, 1.3 * d1, 0.02 * peak, d1, 2.5 * sigma],
        [peak, 1.5 * d1, 0.05 * peak, 0.5 * d1, 3.0 * sigma],
    ];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let fit = levenberg_marquardt(ys.len(), &start, &LmOptions::default(), |t, r, j| {
            if t[1] <= 0.0 || t[3] <= 0.0 || t[2] < 0.0 || t[4] < 0.0 {
                return false;
            }
            for (i, x) in xs.iter().enumerate() {
                let rho_sq = x[0] * x[0] + x[1] * x[1];
                let rho = rho_sq.sqrt();
                let e1 = (-rho_sq * t[1]).exp();
                let dr = rho - t[4];
                let e2 = (-dr * dr * t[3]).exp();
                r[i] = ys[i] - (t[0] * e1 + t[2] * rho_sq * e2);
                j[i * 5] = -e1;
                j[i * 5 + 1] = t[0] * rho_sq * e1;
                j[i * 5 + 2] = -rho_sq * e2;
                j[i * 5 + 3] = t[2] * rho_sq * dr * dr * e2;
                j[i * 5 + 4] = -t[2] * rho_sq * e2 * 2.0 * dr * t[3];
            }
            true
        });
        if let Ok(f) = fit {
            if best.as_ref().map(|(_, c)| f.chi2 < *c).unwrap_or(true) {
                best = Some((f.params, f.chi2));
            }
        }
    }
    best.ok_or_else(|| Error::NoConvergence("gaussian-halo family fit failed from all starts".into()))
}

/// Pooled nonlinear fit of all accepted co-centered records.
pub fn fit_irf_family(
    records: &mut [CenteredRecord],
    family: FamilyKind,
    width_range: Option<(f64, f64)>,
) -> Result<(IrfModel, f64)> {
    if let Some((lo, hi)) = width_range {
        for r in records.iter_mut() {
            r.diag.accepted = r.diag.width >= lo && r.diag.width <= hi;
        }
        if !records.iter().any(|r| r.diag.accepted) {
            return Err(Error::Calibration(
                "width acceptance range rejected every record".into(),
            ));
        }
    }
    let (xs, ys) = pooled_points(records);
    let pitch = records[0].pitch;
    match family {
        FamilyKind::Asymmetric1D => {
            if records[0].dim != 1 {
                return Err(Error::Calibration("asymmetric family needs 1-D records".into()));
            }
            let (p, chi2) = fit_asymmetric(&xs, &ys)?;
            let model = IrfModel::new(
                IrfFamily::Asymmetric1D {
                    a1: p[0],
                    b1: p[1],
                    b2: p[2],
                },
                pitch,
            )?;
            Ok((model, chi2))
        }
        FamilyKind::GaussianHalo2D => {
            if records[0].dim != 2 {
                return Err(Error::Calibration("gaussian-halo family needs 2-D records".into()));
            }
            let (p, chi2) = fit_gaussian_halo(&xs, &ys)?;
            let model = IrfModel::new(
                IrfFamily::GaussianHalo2D {
                    b1: p[0],
                    d1: p[1],
                    b2: p[2],
                    d2: p[3],
                    rho0: p[4],
                },
                pitch,
            )?;
            Ok((model, chi2))
        }
    }
}

/// Averages the per-record fit residuals onto a pixel-pitch lag grid and
/// computes the residual autocorrelation with zero-padding.
pub fn compute_residual_and_autocorr(
    records: &[CenteredRecord],
    irf: &IrfModel,
) -> Result<(SampledSignal, Autocorr)> {
    let accepted: Vec<&CenteredRecord> = records.iter().filter(|r| r.diag.accepted).collect();
    if accepted.is_empty() {
        return Err(Error::Calibration("no accepted records".into()));
    }
    let dim = accepted[0].dim;
    let pitch = accepted[0].pitch;
    let kx = accepted
        .iter()
        .map(|r| (r.extents[0].saturating_sub(1)) / 2)
        .min()
        .unwrap();
    let ky = if dim == 1 {
        0
    } else {
        accepted
            .iter()
            .map(|r| (r.extents[1].saturating_sub(1)) / 2)
            .min()
            .unwrap()
    };
    let grid = if dim == 1 {
        PixelGrid::new_1d(2 * kx + 1, pitch[0], -(kx as f64) * pitch[0])?
    } else {
        PixelGrid::new_2d(
            2 * kx + 1,
            2 * ky + 1,
            pitch,
            [-(kx as f64) * pitch[0], -(ky as f64) * pitch[1]],
        )?
    };
    let mut g = vec![0.0; grid.len()];
    let s = accepted.len() as f64;
    for rec in &accepted {
        for (x, v) in rec.coords.iter().zip(&rec.values) {
            let bx = (x[0] / pitch[0]).round() as i64;
            let by = if dim == 1 {
                0
            } else {
                (x[1] / pitch[1]).round() as i64
            };
            if bx.abs() > kx as i64 || by.abs() > ky as i64 {
                continue;
            }
            let ix = (bx + kx as i64) as usize;
            let iy = (by + ky as i64) as usize;
            g[grid.index_of(ix, iy)] += (v - irf.eval(*x)) / s;
        }
    }
    let residual = SampledSignal::new(grid.clone(), g.clone(), "residual")?;

    // Autocorrelation over the same lag grid, zero outside.
    let [nx, ny] = grid.extents();
    let mut acf = vec![0.0; grid.len()];
    for ly in 0..ny {
        for lx in 0..nx {
            let (dx, dy) = (lx as i64 - kx as i64, ly as i64 - ky as i64);
            let mut acc = 0.0;
            for iy in 0..ny {
                for ix in 0..nx {
                    let (jx, jy) = (ix as i64 - dx, iy as i64 - dy);
                    if jx < 0 || jy < 0 || jx >= nx as i64 || jy >= ny as i64 {
                        continue;
                    }
                    acc += g[grid.index_of(ix, iy)] * g[grid.index_of(jx as usize, jy as usize)];
                }
            }
            acf[grid.index_of(lx, ly)] = acc;
        }
    }
    Ok((
        residual,
        Autocorr {
            grid,
            values: acf,
        },
    ))
}

/// Runs the whole calibration: co-center, pooled fit, residual, and the
/// response width on a reference grid.
pub fn calibrate(input: &CalibrationInput) -> Result<CalibrationResult> {
    let mut centered = cocenter_normalize(&input.records)?;
    let (irf, fit_chi2) = fit_irf_family(&mut centered, input.family, input.width_range)?;
    let (residual, autocorr) = compute_residual_and_autocorr(&centered, &irf)?;
    // Reference grid for the width: the largest record patch.
    let big = input
        .records
        .iter()
        .max_by_key(|r| r.grid.len())
        .expect("nonempty");
    let cache = crate::irf::IrfCache::new(&irf, &big.grid)?;
    Ok(CalibrationResult {
        d0: cache.d0,
        irf,
        residual,
        autocorr,
        diagnostics: centered.into_iter().map(|r| r.diag).collect(),
        fit_chi2,
    })
}

/// Finds bright point-like spots in a 2-D image: local maxima above the
/// median plus `k_mad` median absolute deviations, extracted as square
/// patches of radius `3 * expected_width`, brightest first, overlapping
/// picks suppressed.
pub fn detect_spots(
    image: &SampledSignal,
    expected_width: f64,
    k_mad: f64,
) -> Vec<SampledSignal> {
    let grid = &image.grid;
    let [nx, ny] = grid.extents();
    let mut sorted = image.values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let median = sorted[sorted.len() / 2];
    let mut dev: Vec<f64> = image.values.iter().map(|v| (v - median).abs()).collect();
    dev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mad = dev[dev.len() / 2];
    let threshold = median + k_mad * mad;

    let radius = (3.0 * expected_width / grid.pitch()[0]).ceil() as usize;
    let mut maxima: Vec<(f64, usize, usize)> = Vec::new();
    for iy in 1..ny.saturating_sub(1) {
        for ix in 1..nx.saturating_sub(1) {
            let v = image.values[grid.index_of(ix, iy)];
            if v <= threshold {
                continue;
            }
            let mut is_max = true;
            'scan: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let w = image.values
                        [grid.index_of((ix as i64 + dx) as usize, (iy as i64 + dy) as usize)];
                    if w > v || (w == v && (dy < 0 || (dy == 0 && dx < 0))) {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max && ix >= radius && iy >= radius && ix + radius < nx && iy + radius < ny {
                maxima.push((v, ix, iy));
            }
        }
    }
    maxima.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut patches = Vec::new();
    for (_, ix, iy) in maxima {
        if taken.iter().any(|&(tx, ty)| {
            let dx = tx as f64 - ix as f64;
            let dy = ty as f64 - iy as f64;
            (dx * dx + dy * dy).sqrt() < 2.0 * radius as f64
        }) {
            continue;
        }
        taken.push((ix, iy));
        let side = 2 * radius + 1;
        let sub_origin = grid.coord(ix - radius, iy - radius);
        let sub = PixelGrid::new_2d(side, side, grid.pitch(), sub_origin).expect("valid subgrid");
        let mut values = Vec::with_capacity(side * side);
        for sy in 0..side {
            for sx in 0..side {
                values.push(image.values[grid.index_of(ix - radius + sx, iy - radius + sy)]);
            }
        }
        patches.push(
            SampledSignal::new(sub, values, format!("{}_spot_{}_{}", image.label, ix, iy))
                .expect("sizes match"),
        );
    }
    patches
}
