//! Instrument response function models.
//!
//! An [`IrfModel`] holds a parametric family evaluated directly at arbitrary
//! real offsets. Fitted parameters are assumed to describe the *pixelated*
//! response (the calibration data is itself pixelated); explicit pixelation
//! through [`PixelatedIrf`] is only needed when starting from an analytic
//! pre-pixelation kernel or when building tabulated models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PixelGrid, Point};

/// Parametric IRF families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IrfFamily {
    /// 1-D asymmetric peak `a1 / (exp(b1*x) + exp(-b2*x))`.
    Asymmetric1D { a1: f64, b1: f64, b2: f64 },
    /// 2-D radial peak `b1*exp(-rho^2*d1) + b2*rho^2*exp(-(rho-rho0)^2*d2)`.
    ///
    /// With `b2 == 0` this is a plain isotropic Gaussian; `rho0` is the halo
    /// radius, distinct from the mutation radius used by the solver.
    GaussianHalo2D {
        b1: f64,
        d1: f64,
        b2: f64,
        d2: f64,
        rho0: f64,
    },
    /// Pre-pixelated samples on an offset grid; evaluated by bilinear
    /// interpolation and zero outside the tabulated support.
    Tabulated { grid: PixelGrid, samples: Vec<f64> },
}

impl IrfFamily {
    pub fn dim(&self) -> usize {
        match self {
            IrfFamily::Asymmetric1D { .. } => 1,
            IrfFamily::GaussianHalo2D { .. } => 2,
            IrfFamily::Tabulated { grid, .. } => grid.dim(),
        }
    }
}

/// A fitted IRF: family plus the acquisition pixel pitch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrfModel {
    pub family: IrfFamily,
    /// Acquisition pixel pitch per axis.
    pub pitch: [f64; 2],
    /// Set when the model has been scaled so its reference-grid sum is 1.
    pub normalized: bool,
}

impl IrfModel {
    pub fn new(family: IrfFamily, pitch: [f64; 2]) -> Result<Self> {
        match &family {
            IrfFamily::Asymmetric1D { a1, b1, b2 } => {
                if !(a1.is_finite() && *b1 > 0.0 && *b2 > 0.0) {
                    return Err(Error::InvalidIrf(format!(
                        "asymmetric family needs finite a1 and positive decay rates, got a1={a1} b1={b1} b2={b2}"
                    )));
                }
            }
            IrfFamily::GaussianHalo2D { d1, d2, b2, .. } => {
                if !(*d1 > 0.0) || (*b2 != 0.0 && !(*d2 > 0.0)) {
                    return Err(Error::InvalidIrf(
                        "gaussian-halo family needs positive width parameters".into(),
                    ));
                }
            }
            IrfFamily::Tabulated { grid, samples } => {
                if samples.len() != grid.len() {
                    return Err(Error::InvalidIrf(
                        "tabulated sample count does not match its grid".into(),
                    ));
                }
                if samples.iter().any(|s| !s.is_finite()) {
                    return Err(Error::NonFinite("tabulated IRF samples".into()));
                }
            }
        }
        Ok(Self {
            family,
            pitch,
            normalized: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    /// Evaluates the response at an offset from the source position.
    pub fn eval(&self, offset: Point) -> f64 {
        match &self.family {
            IrfFamily::Asymmetric1D { a1, b1, b2 } => {
                let x = offset[0];
                let denom = (b1 * x).exp() + (-b2 * x).exp();
                if denom.is_finite() {
                    a1 / denom
                } else {
                    0.0
                }
            }
            IrfFamily::GaussianHalo2D {
                b1,
                d1,
                b2,
                d2,
                rho0,
            } => {
                let (dx, dy) = (offset[0], offset[1]);
                if *b2 == 0.0 {
                    // Same factored arithmetic as the separable stamp path.
                    b1 * (-dx * dx * d1).exp() * (-dy * dy * d1).exp()
                } else {
                    let rho_sq = dx * dx + dy * dy;
                    let rho = rho_sq.sqrt();
                    let dr = rho - rho0;
                    b1 * (-rho_sq * d1).exp() + b2 * rho_sq * (-dr * dr * d2).exp()
                }
            }
            IrfFamily::Tabulated { grid, samples } => bilinear(grid, samples, offset),
        }
    }

    /// Gradient of the response with respect to the offset.
    pub fn grad(&self, offset: Point) -> Point {
        match &self.family {
            IrfFamily::Asymmetric1D { a1, b1, b2 } => {
                let x = offset[0];
                let e1 = (b1 * x).exp();
                let e2 = (-b2 * x).exp();
                let denom = e1 + e2;
                if !denom.is_finite() {
                    return [0.0, 0.0];
                }
                let num = -(a1 * (b1 * e1 - b2 * e2));
                let g = num / (denom * denom);
                [if g.is_finite() { g } else { 0.0 }, 0.0]
            }
            IrfFamily::GaussianHalo2D {
                b1,
                d1,
                b2,
                d2,
                rho0,
            } => {
                let (dx, dy) = (offset[0], offset[1]);
                let rho_sq = dx * dx + dy * dy;
                let core = -2.0 * d1 * b1 * (-rho_sq * d1).exp();
                if *b2 == 0.0 {
                    return [dx * core, dy * core];
                }
                let rho = rho_sq.sqrt();
                let dr = rho - rho0;
                let e2 = (-dr * dr * d2).exp();
                // d/dx of b2*rho^2*exp(-(rho-rho0)^2 d2), with the rho -> 0
                // limit taken explicitly.
                let halo = if rho > 0.0 {
                    b2 * e2 * (2.0 - 2.0 * rho * dr * d2)
                } else {
                    2.0 * b2 * e2
                };
                [dx * (core + halo), dy * (core + halo)]
            }
            IrfFamily::Tabulated { grid, samples } => {
                let h = [grid.pitch()[0] * 0.5, grid.pitch()[1] * 0.5];
                let mut g = [0.0, 0.0];
                for axis in 0..grid.dim() {
                    let mut lo = offset;
                    let mut hi = offset;
                    lo[axis] -= h[axis];
                    hi[axis] += h[axis];
                    g[axis] = (bilinear(grid, samples, hi) - bilinear(grid, samples, lo))
                        / (2.0 * h[axis]);
                }
                g
            }
        }
    }

    /// Returns a copy scaled so that the samples on `grid` sum to one.
    pub fn normalize_on(&self, grid: &PixelGrid) -> Result<IrfModel> {
        let c = grid.center_coord();
        let sum: f64 = grid
            .centers()
            .map(|x| self.eval([x[0] - c[0], x[1] - c[1]]))
            .sum();
        if !(sum.abs() > 0.0) || !sum.is_finite() {
            return Err(Error::InvalidIrf(format!(
                "cannot normalize: grid sum is {sum}"
            )));
        }
        let mut family = self.family.clone();
        match &mut family {
            IrfFamily::Asymmetric1D { a1, .. } => *a1 /= sum,
            IrfFamily::GaussianHalo2D { b1, b2, .. } => {
                *b1 /= sum;
                *b2 /= sum;
            }
            IrfFamily::Tabulated { samples, .. } => {
                for s in samples.iter_mut() {
                    *s /= sum;
                }
            }
        }
        Ok(IrfModel {
            family,
            pitch: self.pitch,
            normalized: true,
        })
    }
}

fn bilinear(grid: &PixelGrid, samples: &[f64], offset: Point) -> f64 {
    let [nx, ny] = grid.extents();
    let fx = (offset[0] - grid.origin()[0]) / grid.pitch()[0];
    if grid.dim() == 1 {
        if fx < 0.0 || fx > (nx - 1) as f64 {
            return 0.0;
        }
        let i0 = (fx.floor() as usize).min(nx.saturating_sub(2));
        let t = fx - i0 as f64;
        return samples[i0] * (1.0 - t) + samples[(i0 + 1).min(nx - 1)] * t;
    }
    let fy = (offset[1] - grid.origin()[1]) / grid.pitch()[1];
    if fx < 0.0 || fx > (nx - 1) as f64 || fy < 0.0 || fy > (ny - 1) as f64 {
        return 0.0;
    }
    let i0 = (fx.floor() as usize).min(nx.saturating_sub(2));
    let j0 = (fy.floor() as usize).min(ny.saturating_sub(2));
    let tx = fx - i0 as f64;
    let ty = fy - j0 as f64;
    let i1 = (i0 + 1).min(nx - 1);
    let j1 = (j0 + 1).min(ny - 1);
    let v00 = samples[grid.index_of(i0, j0)];
    let v10 = samples[grid.index_of(i1, j0)];
    let v01 = samples[grid.index_of(i0, j1)];
    let v11 = samples[grid.index_of(i1, j1)];
    v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty + v11 * tx * ty
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Newton iteration from the Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Legendre polynomial P_n and its derivative at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Pixelation of an analytic kernel: the mean of `J` over the pixel cell
/// centered at each evaluation point, by tensor-product Gauss-Legendre
/// quadrature.
pub struct PixelatedIrf<F: Fn(Point) -> f64 + Sync> {
    kernel: F,
    dim: usize,
    pitch: [f64; 2],
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl<F: Fn(Point) -> f64 + Sync> PixelatedIrf<F> {
    pub fn new(kernel: F, dim: usize, pitch: [f64; 2], order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self {
            kernel,
            dim,
            pitch,
            nodes,
            weights,
        }
    }

    /// Mean of the kernel over the cell `x + Q_p`.
    pub fn eval(&self, x: Point) -> Result<f64> {
        let hx = self.pitch[0] * 0.5;
        let mut acc = 0.0;
        if self.dim == 1 {
            for (u, wu) in self.nodes.iter().zip(&self.weights) {
                acc += wu * (self.kernel)([x[0] + hx * u, 0.0]);
            }
            // Mean over the cell: the Jacobian hx cancels against the cell
            // length 2*hx in the division, leaving 1/2 per axis.
            acc *= 0.5;
        } else {
            let hy = self.pitch[1] * 0.5;
            for (u, wu) in self.nodes.iter().zip(&self.weights) {
                for (v, wv) in self.nodes.iter().zip(&self.weights) {
                    acc += wu * wv * (self.kernel)([x[0] + hx * u, x[1] + hy * v]);
                }
            }
            acc *= 0.25;
        }
        if acc.is_finite() {
            Ok(acc)
        } else {
            Err(Error::NonFinite("pixelation quadrature".into()))
        }
    }

    /// Samples the pixelated kernel on `grid` (offsets relative to the grid
    /// center) into a tabulated model.
    pub fn tabulate(&self, grid: &PixelGrid) -> Result<IrfModel> {
        let c = grid.center_coord();
        let mut samples = Vec::with_capacity(grid.len());
        for x in grid.centers() {
            samples.push(self.eval([x[0] - c[0], x[1] - c[1]])?);
        }
        // Re-center the tabulated grid so index 0 holds offset coordinates.
        let offset_grid = match grid.dim() {
            1 => PixelGrid::new_1d(grid.extents()[0], grid.pitch()[0], grid.origin()[0] - c[0])?,
            _ => PixelGrid::new_2d(
                grid.extents()[0],
                grid.extents()[1],
                grid.pitch(),
                [grid.origin()[0] - c[0], grid.origin()[1] - c[1]],
            )?,
        };
        IrfModel::new(
            IrfFamily::Tabulated {
                grid: offset_grid,
                samples,
            },
            self.pitch,
        )
    }
}

/// Per-grid cached quantities of an IRF model.
///
/// Samples are taken with the response centered on the grid's center pixel;
/// the cached mean is what turns the plain response into its mean-subtracted
/// variant on this grid.
#[derive(Debug, Clone)]
pub struct IrfCache {
    pub model: IrfModel,
    pub grid: PixelGrid,
    /// Response sampled at every pixel, centered at the grid center pixel.
    pub samples: Vec<f64>,
    /// Grid mean of the samples.
    pub mean: f64,
    /// Sum of the samples.
    pub sum: f64,
    /// Squared 2-norm of the samples.
    pub norm_sq: f64,
    /// Squared 2-norm of the mean-subtracted samples.
    pub dev_norm_sq: f64,
    /// Width `d0`: twice the standard deviation of the response.
    pub d0: f64,
    /// Per-axis squared derivative norms over the grid.
    pub deriv_norm_sq: [f64; 2],
    /// Smallest per-axis derivative norm.
    pub ider: f64,
    /// Optional stamp support radius; `None` evaluates on the full grid.
    pub support_radius: Option<f64>,
}

impl IrfCache {
    pub fn new(model: &IrfModel, grid: &PixelGrid) -> Result<Self> {
        if model.dim() != grid.dim() {
            return Err(Error::GridMismatch(format!(
                "IRF dimension {} vs grid dimension {}",
                model.dim(),
                grid.dim()
            )));
        }
        let c = grid.center_coord();
        let n = grid.len();
        let mut samples = Vec::with_capacity(n);
        for x in grid.centers() {
            samples.push(model.eval([x[0] - c[0], x[1] - c[1]]));
        }
        let sum: f64 = samples.iter().sum();
        let mean = sum / n as f64;
        let norm_sq: f64 = samples.iter().map(|s| s * s).sum();
        let dev_norm_sq: f64 = samples.iter().map(|s| (s - mean) * (s - mean)).sum();

        // Width from the weighted second moment, averaged over axes.
        let wsum: f64 = samples.iter().map(|s| s.abs()).sum();
        let mut centroid = [0.0; 2];
        for (i, x) in grid.centers().enumerate() {
            let w = samples[i].abs();
            centroid[0] += w * x[0];
            centroid[1] += w * x[1];
        }
        centroid[0] /= wsum;
        centroid[1] /= wsum;
        let mut var = [0.0; 2];
        for (i, x) in grid.centers().enumerate() {
            let w = samples[i].abs();
            var[0] += w * (x[0] - centroid[0]) * (x[0] - centroid[0]);
            var[1] += w * (x[1] - centroid[1]) * (x[1] - centroid[1]);
        }
        var[0] /= wsum;
        var[1] /= wsum;
        let mean_var = if grid.dim() == 1 {
            var[0]
        } else {
            0.5 * (var[0] + var[1])
        };
        let d0 = 2.0 * mean_var.sqrt();

        let mut deriv_norm_sq = [0.0; 2];
        for x in grid.centers() {
            let g = model.grad([x[0] - c[0], x[1] - c[1]]);
            deriv_norm_sq[0] += g[0] * g[0];
            deriv_norm_sq[1] += g[1] * g[1];
        }
        let ider = if grid.dim() == 1 {
            deriv_norm_sq[0].sqrt()
        } else {
            deriv_norm_sq[0].min(deriv_norm_sq[1]).sqrt()
        };

        if !(d0 > 0.0) {
            return Err(Error::InvalidIrf(format!("d0 must be > 0, got {d0}")));
        }
        if !(ider > 0.0) {
            return Err(Error::InvalidIrf(format!(
                "derivative norm must be > 0, got {ider}"
            )));
        }

        Ok(Self {
            model: model.clone(),
            grid: grid.clone(),
            samples,
            mean,
            sum,
            norm_sq,
            dev_norm_sq,
            d0,
            deriv_norm_sq,
            ider,
            support_radius: None,
        })
    }

    pub fn with_support_radius(mut self, radius: Option<f64>) -> Self {
        self.support_radius = radius;
        self
    }

    /// Squared norm of the working response: plain or mean-subtracted.
    pub fn star_norm_sq(&self, dev: bool) -> f64 {
        if dev {
            self.dev_norm_sq
        } else {
            self.norm_sq
        }
    }

    /// Working response sample at linear pixel index `i`.
    pub fn star_sample(&self, i: usize, dev: bool) -> f64 {
        if dev {
            self.samples[i] - self.mean
        } else {
            self.samples[i]
        }
    }

    /// Overlap of absolute responses at lag `z`:
    /// `Y(z) = sum_i |I*(x_i)| |I*(x_i - z)|`.
    pub fn y_overlap(&self, z: Point, dev: bool) -> f64 {
        let c = self.grid.center_coord();
        let mu = if dev { self.mean } else { 0.0 };
        let mut acc = 0.0;
        for (i, x) in self.grid.centers().enumerate() {
            let a = self.samples[i] - mu;
            let b = self.model.eval([x[0] - c[0] - z[0], x[1] - c[1] - z[1]]) - mu;
            acc += a.abs() * b.abs();
        }
        acc
    }

    fn axis_span(&self, axis: usize, center: f64) -> (usize, usize) {
        let n = self.grid.extents()[axis];
        match self.support_radius {
            None => (0, n),
            Some(r) => {
                let pitch = self.grid.pitch()[axis];
                let origin = self.grid.origin()[axis];
                let lo = ((center - r - origin) / pitch).floor().max(0.0) as usize;
                let hi = (((center + r - origin) / pitch).ceil() as usize + 1).min(n);
                (lo.min(n), hi)
            }
        }
    }

    /// Adds `weight * I(x_i - center)` to `field` for every pixel.
    ///
    /// `field` is indexed like the grid. The mean-subtraction of the
    /// background-free variant is applied by the caller through the cached
    /// mean, so this always accumulates the plain response.
    pub fn accumulate_stamp(&self, field: &mut [f64], center: Point, weight: f64) {
        debug_assert_eq!(field.len(), self.grid.len());
        let [nx, _ny] = self.grid.extents();
        let (x0, x1) = self.axis_span(0, center[0]);
        match &self.model.family {
            IrfFamily::Asymmetric1D { a1, b1, b2 } => {
                let ox = self.grid.origin()[0];
                let px = self.grid.pitch()[0];
                for ix in x0..x1 {
                    let dx = ox + ix as f64 * px - center[0];
                    let denom = (b1 * dx).exp() + (-b2 * dx).exp();
                    if denom.is_finite() {
                        field[ix] += weight * a1 / denom;
                    }
                }
            }
            IrfFamily::GaussianHalo2D { b1, d1, b2, .. } if *b2 == 0.0 => {
                let (y0, y1) = self.axis_span(1, center[1]);
                let ox = self.grid.origin()[0];
                let oy = self.grid.origin()[1];
                let px = self.grid.pitch()[0];
                let py = self.grid.pitch()[1];
                let mut wx = Vec::with_capacity(x1 - x0);
                for ix in x0..x1 {
                    let dx = ox + ix as f64 * px - center[0];
                    wx.push(b1 * (-dx * dx * d1).exp());
                }
                for iy in y0..y1 {
                    let dy = oy + iy as f64 * py - center[1];
                    let wy = weight * (-dy * dy * d1).exp();
                    let row = &mut field[iy * nx + x0..iy * nx + x1];
                    for (f, w) in row.iter_mut().zip(&wx) {
                        *f = w.mul_add(wy, *f);
                    }
                }
            }
            _ => {
                let (y0, y1) = self.axis_span(1, center[1]);
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        let x = self.grid.coord(ix, iy);
                        let v = self.model.eval([x[0] - center[0], x[1] - center[1]]);
                        field[iy * nx + ix] += weight * v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_1d(sigma: f64) -> impl Fn(Point) -> f64 + Sync {
        move |x: Point| (-x[0] * x[0] / (2.0 * sigma * sigma)).exp()
    }

    #[test]
    fn pixelation_of_constant_is_identity() {
        let pix = PixelatedIrf::new(|_x| 3.25, 1, [1.0, 1.0], 4);
        for x in [-2.0, 0.0, 0.7, 5.3] {
            let v = pix.eval([x, 0.0]).unwrap();
            assert!((v - 3.25).abs() < 1e-14, "got {v}");
        }
        let pix2 = PixelatedIrf::new(|_x| 3.25, 2, [1.0, 1.0], 4);
        assert!((pix2.eval([0.3, -1.2]).unwrap() - 3.25).abs() < 1e-14);
    }

    #[test]
    fn pixelation_matches_dense_riemann_reference() {
        let sigma = 1.435;
        let pix = PixelatedIrf::new(gaussian_1d(sigma), 1, [1.0, 1.0], 4);
        let quad = pix.eval([0.0, 0.0]).unwrap();
        // Midpoint Riemann reference over the cell [-0.5, 0.5].
        let steps = 1_000_000usize;
        let h = 1.0 / steps as f64;
        let mut acc = 0.0;
        for i in 0..steps {
            let x = -0.5 + (i as f64 + 0.5) * h;
            acc += (-x * x / (2.0 * sigma * sigma)).exp();
        }
        let reference = acc * h;
        assert!(
            ((quad - reference) / reference).abs() < 1e-8,
            "quad {quad} vs reference {reference}"
        );
    }

    #[test]
    fn pixelation_preserves_symmetry() {
        let pix = PixelatedIrf::new(gaussian_1d(0.9), 1, [1.0, 1.0], 4);
        for x in [0.25, 0.5, 1.0, 2.5] {
            let a = pix.eval([x, 0.0]).unwrap();
            let b = pix.eval([-x, 0.0]).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn asymmetric_family_evaluates() {
        let irf = IrfModel::new(
            IrfFamily::Asymmetric1D {
                a1: 1.0,
                b1: 2.0,
                b2: 1.0,
            },
            [1.0, 1.0],
        )
        .unwrap();
        assert!((irf.eval([0.0, 0.0]) - 0.5).abs() < 1e-15);
        assert!(irf.eval([500.0, 0.0]).abs() < 1e-100);
        assert!(irf.eval([-500.0, 0.0]).abs() < 1e-100);
        // Asymmetry: slower decay on the negative side (b2 < b1).
        assert!(irf.eval([-1.0, 0.0]) > irf.eval([1.0, 0.0]));
    }

    #[test]
    fn gaussian_grad_matches_finite_differences() {
        let irf = IrfModel::new(
            IrfFamily::GaussianHalo2D {
                b1: 2.0,
                d1: 0.3,
                b2: 0.5,
                d2: 0.8,
                rho0: 2.5,
            },
            [1.0, 1.0],
        )
        .unwrap();
        let h = 1e-6;
        for p in [[0.4, -1.3], [2.0, 1.0], [0.0, 0.0], [-2.6, 0.1]] {
            let g = irf.grad(p);
            for axis in 0..2 {
                let mut hi = p;
                let mut lo = p;
                hi[axis] += h;
                lo[axis] -= h;
                let fd = (irf.eval(hi) - irf.eval(lo)) / (2.0 * h);
                assert!(
                    (g[axis] - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                    "grad {g:?} axis {axis} vs fd {fd} at {p:?}"
                );
            }
        }
    }

    #[test]
    fn tabulated_zero_outside_support() {
        let grid = PixelGrid::new_1d(5, 1.0, -2.0).unwrap();
        let samples = vec![0.1, 0.5, 1.0, 0.5, 0.1];
        let irf = IrfModel::new(IrfFamily::Tabulated { grid, samples }, [1.0, 1.0]).unwrap();
        assert_eq!(irf.eval([3.0, 0.0]), 0.0);
        assert_eq!(irf.eval([-2.5, 0.0]), 0.0);
        assert!((irf.eval([0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((irf.eval([0.5, 0.0]) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn normalize_on_grid_sums_to_one() {
        let grid = PixelGrid::new_2d(21, 21, [1.0, 1.0], [-10.0, -10.0]).unwrap();
        let irf = IrfModel::new(
            IrfFamily::GaussianHalo2D {
                b1: 7.0,
                d1: 0.2,
                b2: 0.0,
                d2: 1.0,
                rho0: 0.0,
            },
            [1.0, 1.0],
        )
        .unwrap();
        let norm = irf.normalize_on(&grid).unwrap();
        let cache = IrfCache::new(&norm, &grid).unwrap();
        assert!((cache.sum - 1.0).abs() < 1e-12);
        assert!(norm.normalized);
    }

    #[test]
    fn cache_width_matches_gaussian_sigma() {
        let sigma = 1.435f64;
        let grid = PixelGrid::new_2d(31, 31, [1.0, 1.0], [0.0, 0.0]).unwrap();
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
        let cache = IrfCache::new(&irf, &grid).unwrap();
        assert!(
            (cache.d0 - 2.0 * sigma).abs() < 0.02 * 2.0 * sigma,
            "d0 {} vs {}",
            cache.d0,
            2.0 * sigma
        );
    }

    #[test]
    fn dev_samples_sum_to_zero() {
        let grid = PixelGrid::new_1d(64, 1.0, 0.0).unwrap();
        let irf = IrfModel::new(
            IrfFamily::Asymmetric1D {
                a1: 1.0,
                b1: 0.7,
                b2: 0.5,
            },
            [1.0, 1.0],
        )
        .unwrap();
        let cache = IrfCache::new(&irf, &grid).unwrap();
        let dev_sum: f64 = (0..grid.len()).map(|i| cache.star_sample(i, true)).sum();
        let max = cache.samples.iter().cloned().fold(0.0f64, f64::max);
        assert!(dev_sum.abs() <= 1e-9 * max * grid.len() as f64);
    }

    #[test]
    fn stamp_fast_path_matches_scalar_eval() {
        let grid = PixelGrid::new_2d(16, 14, [1.0, 1.0], [0.0, 0.0]).unwrap();
        let irf = IrfModel::new(
            IrfFamily::GaussianHalo2D {
                b1: 1.7,
                d1: 0.24,
                b2: 0.0,
                d2: 1.0,
                rho0: 0.0,
            },
            [1.0, 1.0],
        )
        .unwrap();
        let cache = IrfCache::new(&irf, &grid).unwrap();
        let center = [5.37, 8.11];
        let mut field = vec![0.0; grid.len()];
        cache.accumulate_stamp(&mut field, center, 2.0);
        for (i, x) in grid.centers().enumerate() {
            let expect = 2.0 * irf.eval([x[0] - center[0], x[1] - center[1]]);
            assert!(
                (field[i] - expect).abs() <= 1e-12 * expect.abs().max(1e-30),
                "pixel {i}: {} vs {}",
                field[i],
                expect
            );
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (nodes, weights) = gauss_legendre(4);
        // Degree-7 polynomial integrated exactly.
        let f = |x: f64| 3.0 * x.powi(7) - x.powi(4) + 2.0 * x * x - 1.0;
        let acc: f64 = nodes.iter().zip(&weights).map(|(x, w)| w * f(*x)).sum();
        let exact = -2.0 / 5.0 + 4.0 / 3.0 - 2.0;
        assert!((acc - exact).abs() < 1e-13, "{acc} vs {exact}");
    }
}

#[cfg(test)]
mod cutoff_tests {
    use super::*;

    #[test]
    fn support_cutoff_error_is_bounded_by_tail_mass() {
        let grid = PixelGrid::new_2d(25, 25, [1.0, 1.0], [0.0, 0.0]).unwrap();
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
        .unwrap()
        .normalize_on(&grid)
        .unwrap();
        let exact = IrfCache::new(&irf, &grid).unwrap();
        let radius = 4.0 * exact.d0;
        let clipped = IrfCache::new(&irf, &grid)
            .unwrap()
            .with_support_radius(Some(radius));
        let center = [12.3, 11.7];
        let mut full = vec![0.0; grid.len()];
        let mut cut = vec![0.0; grid.len()];
        exact.accumulate_stamp(&mut full, center, 1.0);
        clipped.accumulate_stamp(&mut cut, center, 1.0);
        // Per-pixel error is at most the tail value at the cutoff radius.
        let tail = irf.eval([radius, 0.0]);
        let mut worst = 0.0f64;
        for (a, b) in full.iter().zip(&cut) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst <= tail * (1.0 + 1e-12) + 1e-300, "worst {worst} vs tail {tail}");
        // And the clipped stamp is exact inside the radius.
        for (i, x) in grid.centers().enumerate() {
            let d = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt();
            if d < radius - 1.5 {
                assert_eq!(full[i].to_bits(), cut[i].to_bits());
            }
        }
    }
}
