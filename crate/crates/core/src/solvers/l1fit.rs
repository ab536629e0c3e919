//! L1-fidelity Lasso: `min ||y - A b||_1 + lambda ||b||_1`.
//!
//! Solved by smoothing the fidelity with a Huber function of width `mu`
//! and driving `mu` down geometrically; each stage runs FISTA with step
//! `mu / sigma_max(A)^2` warm-started from the previous stage. The reported
//! KKT residual is the stationarity violation of the final smoothed
//! problem, and `final_smoothing` records the last `mu`.

use nalgebra::{DMatrix, DVector};

use super::lasso::{LassoFit, SolvePath};
use super::soft_threshold;
use crate::{DrltError, Result};

#[derive(Debug, Clone)]
pub struct L1Options {
    /// Starting smoothing width relative to `max(1, ||y||_inf)`.
    pub mu_start_rel: f64,
    /// Final smoothing width relative to `max(1, ||y||_inf)`.
    pub mu_end_rel: f64,
    /// Geometric shrink factor per continuation stage.
    pub mu_shrink: f64,
    /// Max FISTA iterations per stage.
    pub stage_iters: usize,
    /// Stationarity tolerance (scaled) for the smoothed problem.
    pub kkt_tol: f64,
    pub warm_beta: Option<DVector<f64>>,
}

impl Default for L1Options {
    fn default() -> Self {
        L1Options {
            mu_start_rel: 1e-1,
            mu_end_rel: 1e-7,
            mu_shrink: 0.1,
            stage_iters: 2_000,
            kkt_tol: 1e-6,
            warm_beta: None,
        }
    }
}

/// Huber derivative: `clamp(t / mu, -1, 1)`.
#[inline]
fn huber_grad(t: f64, mu: f64) -> f64 {
    (t / mu).clamp(-1.0, 1.0)
}

#[cfg(test)]
#[inline]
fn huber_val(t: f64, mu: f64) -> f64 {
    let a = t.abs();
    if a <= mu {
        t * t / (2.0 * mu)
    } else {
        a - mu / 2.0
    }
}

fn spectral_norm_sq(a: &DMatrix<f64>, iters: usize) -> f64 {
    let p = a.ncols();
    let mut v = DVector::from_element(p, 1.0 / (p as f64).sqrt());
    let mut lam = 0.0;
    for _ in 0..iters {
        let w = a.transpose() * (a * &v);
        lam = w.norm();
        if lam == 0.0 {
            return 0.0;
        }
        v = w / lam;
    }
    lam
}

pub fn lasso_l1(y: &DVector<f64>, a: &DMatrix<f64>, lambda: f64) -> Result<LassoFit> {
    lasso_l1_with(y, a, lambda, &L1Options::default())
}

pub fn lasso_l1_with(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    lambda: f64,
    opts: &L1Options,
) -> Result<LassoFit> {
    if y.len() != a.nrows() {
        return Err(DrltError::dims("lasso_l1: y length != rows of A"));
    }
    if lambda < 0.0 {
        return Err(DrltError::param("lambda must be >= 0"));
    }
    let p = a.ncols();
    let data_scale = y.amax().max(1.0);
    let lip_base = spectral_norm_sq(a, 60).max(1e-12);
    let scale = lambda.max(1.0);

    let mut beta = opts.warm_beta.clone().unwrap_or_else(|| DVector::zeros(p));
    let mut mu = opts.mu_start_rel * data_scale;
    let mu_end = opts.mu_end_rel * data_scale;
    let mut total_iters = 0usize;

    loop {
        let step = mu / lip_base;
        // FISTA on  sum_i huber_mu(y_i - a_i b) + lambda ||b||_1
        let mut z = beta.clone();
        let mut t = 1.0f64;
        for _ in 0..opts.stage_iters {
            let r = y - a * &z;
            let psi = r.map(|t| huber_grad(t, mu));
            let grad = -(a.transpose() * &psi);
            let mut next = &z - step * &grad;
            for j in 0..p {
                next[j] = soft_threshold(next[j], step * lambda);
            }
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            z = &next + ((t - 1.0) / t_next) * (&next - &beta);
            let change = (&next - &beta).amax();
            beta = next;
            t = t_next;
            total_iters += 1;
            if change < 1e-12 * data_scale.max(1.0) {
                break;
            }
            // periodic stationarity check to exit the stage early
            if total_iters % 50 == 0
                && smoothed_kkt(y, a, &beta, lambda, mu) / scale < opts.kkt_tol
            {
                break;
            }
        }
        if mu <= mu_end {
            break;
        }
        mu = (mu * opts.mu_shrink).max(mu_end);
    }

    let kkt = smoothed_kkt(y, a, &beta, lambda, mu) / scale;
    let r = y - a * &beta;
    let objective =
        r.iter().map(|t| t.abs()).sum::<f64>() + lambda * beta.iter().map(|b| b.abs()).sum::<f64>();
    Ok(LassoFit {
        beta_hat: beta.as_slice().to_vec(),
        lambda,
        objective,
        kkt_residual: kkt,
        iterations: total_iters,
        converged: kkt < opts.kkt_tol,
        path: SolvePath::HuberSmoothed,
        final_smoothing: Some(mu),
    })
}

/// Stationarity violation of the Huber-smoothed objective.
fn smoothed_kkt(y: &DVector<f64>, a: &DMatrix<f64>, beta: &DVector<f64>, lambda: f64, mu: f64) -> f64 {
    let r = y - a * beta;
    let psi = r.map(|t| huber_grad(t, mu));
    let grad = -(a.transpose() * &psi);
    let mut worst = 0.0f64;
    for j in 0..beta.len() {
        let g = grad[j];
        let v = if beta[j] > 0.0 {
            (g + lambda).abs()
        } else if beta[j] < 0.0 {
            (g - lambda).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Smoothed objective value, used by the tests.
#[cfg(test)]
fn smoothed_objective(y: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64, mu: f64) -> f64 {
    let r = y - a * b;
    r.iter().map(|&t| huber_val(t, mu)).sum::<f64>()
        + lambda * b.iter().map(|x| x.abs()).sum::<f64>()
}
