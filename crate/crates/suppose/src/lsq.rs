//! Small dense Levenberg-Marquardt fitter for the response families.

use crate::error::{Error, Result};

pub struct LmOptions {
    pub max_iter: usize,
    pub ftol: f64,
    pub lambda0: f64,
    pub lambda_max: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: 1e-12,
            lambda0: 1e-3,
            lambda_max: 1e12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmFit {
    pub params: Vec<f64>,
    pub chi2: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves `A x = b` for a small symmetric system by Gaussian elimination
/// with partial pivoting. `a` is row-major `p x p` and is clobbered.
fn solve_in_place(a: &mut [f64], b: &mut [f64], p: usize) -> Option<Vec<f64>> {
    for col in 0..p {
        let mut pivot = col;
        for r in col + 1..p {
            if a[r * p + col].abs() > a[pivot * p + col].abs() {
                pivot = r;
            }
        }
        if a[pivot * p + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for c in 0..p {
                a.swap(col * p + c, pivot * p + c);
            }
            b.swap(col, pivot);
        }
        let d = a[col * p + col];
        for r in col + 1..p {
            let f = a[r * p + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..p {
                a[r * p + c] -= f * a[col * p + c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; p];
    for col in (0..p).rev() {
        let mut acc = b[col];
        for c in col + 1..p {
            acc -= a[col * p + c] * x[c];
        }
        x[col] = acc / a[col * p + col];
    }
    Some(x)
}

/// Damped Gauss-Newton minimization of `sum_i r_i(theta)^2`.
///
/// `eval` fills the residual vector and the row-major `n x p` Jacobian for
/// the given parameters, returning false for infeasible parameters (the
/// step is then rejected).
pub fn levenberg_marquardt(
    n: usize,
    theta0: &[f64],
    opts: &LmOptions,
    mut eval: impl FnMut(&[f64], &mut [f64], &mut [f64]) -> bool,
) -> Result<LmFit> {
    let p = theta0.len();
    let mut theta = theta0.to_vec();
    let mut residuals = vec![0.0; n];
    let mut jac = vec![0.0; n * p];
    if !eval(&theta, &mut residuals, &mut jac) {
        return Err(Error::NoConvergence("infeasible starting parameters".into()));
    }
    let mut chi2: f64 = residuals.iter().map(|r| r * r).sum();
    let mut lambda = opts.lambda0;
    let mut converged = false;
    let mut iterations = 0;

    let mut trial_res = vec![0.0; n];
    let mut trial_jac = vec![0.0; n * p];

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        // Normal equations J^T J and J^T r.
        let mut jtj = vec![0.0; p * p];
        let mut jtr = vec![0.0; p];
        for i in 0..n {
            let row = &jac[i * p..(i + 1) * p];
            for a in 0..p {
                jtr[a] += row[a] * residuals[i];
                for b in a..p {
                    jtj[a * p + b] += row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                jtj[a * p + b] = jtj[b * p + a];
            }
        }
        let trace: f64 = (0..p).map(|a| jtj[a * p + a]).sum();
        let floor = 1e-12 * trace.max(1e-300) / p as f64;

        let mut improved = false;
        while lambda <= opts.lambda_max {
            let mut a = jtj.clone();
            for d in 0..p {
                let diag = jtj[d * p + d].max(floor);
                a[d * p + d] += lambda * diag;
            }
            let mut rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let step = match solve_in_place(&mut a, &mut rhs, p) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + s).collect();
            if eval(&trial, &mut trial_res, &mut trial_jac) {
                let trial_chi2: f64 = trial_res.iter().map(|r| r * r).sum();
                if trial_chi2.is_finite() && trial_chi2 < chi2 {
                    let rel = (chi2 - trial_chi2) / chi2.max(1e-300);
                    theta = trial;
                    std::mem::swap(&mut residuals, &mut trial_res);
                    std::mem::swap(&mut jac, &mut trial_jac);
                    chi2 = trial_chi2;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    if rel < opts.ftol {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 5.0;
        }
        if !improved {
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    Ok(LmFit {
        params: theta,
        chi2,
        iterations,
        converged,
    })
}
