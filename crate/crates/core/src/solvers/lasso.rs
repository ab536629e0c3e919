//! Coordinate-descent L2 Lasso and the joint robust Lasso.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{soft_threshold, RobustLassoFit};
use crate::{DrltError, Result};

/// Which solver path produced a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolvePath {
    CoordinateDescent,
    HuberSmoothed,
}

/// Options shared by the coordinate-descent solvers.
#[derive(Debug, Clone)]
pub struct LassoOptions {
    /// Relative objective-change convergence threshold.
    pub rel_obj_tol: f64,
    /// Scaled KKT residual convergence threshold.
    pub kkt_tol: f64,
    /// Maximum coordinate sweeps.
    pub max_sweeps: usize,
    /// Warm-start coefficients.
    pub warm_beta: Option<DVector<f64>>,
    /// Warm-start MME estimates (robust Lasso only).
    pub warm_delta: Option<DVector<f64>>,
    /// Keep the per-sweep objective trace.
    pub record_trace: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            rel_obj_tol: 1e-9,
            kkt_tol: 1e-6,
            max_sweeps: 50_000,
            warm_beta: None,
            warm_delta: None,
            record_trace: false,
        }
    }
}

/// Result of a single-block Lasso fit (L2 or L1 fidelity).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LassoFit {
    pub beta_hat: Vec<f64>,
    pub lambda: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub path: SolvePath,
    /// Final smoothing parameter (Huber path only).
    pub final_smoothing: Option<f64>,
}

impl LassoFit {
    pub fn beta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta_hat)
    }
}

impl RobustLassoFit {
    pub fn beta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta_hat)
    }

    pub fn delta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.delta_hat)
    }

    /// Recomputes the objective from the stored estimates.
    pub fn recompute_objective(&self, y: &DVector<f64>, a: &DMatrix<f64>) -> f64 {
        let n = y.len() as f64;
        let r = y - a * self.beta() - self.delta();
        r.norm_squared() / (2.0 * n)
            + self.lambda1 * self.beta_hat.iter().map(|b| b.abs()).sum::<f64>()
            + self.lambda2 * self.delta_hat.iter().map(|d| d.abs()).sum::<f64>()
    }
}

/// Scale used to normalise KKT residuals: the largest gradient magnitude a
/// zero solution would see, floored at 1.
fn kkt_scale(y: &DVector<f64>, a: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let g = a.transpose() * y / n;
    g.amax().max(1.0)
}

struct CdState {
    beta: DVector<f64>,
    residual: DVector<f64>,
    col_sq_norm: Vec<f64>,
}

impl CdState {
    fn new(y: &DVector<f64>, a: &DMatrix<f64>, warm: Option<&DVector<f64>>) -> Self {
        let p = a.ncols();
        let n = a.nrows() as f64;
        let col_sq_norm: Vec<f64> = (0..p).map(|j| a.column(j).norm_squared() / n).collect();
        let beta = warm
            .cloned()
            .unwrap_or_else(|| DVector::zeros(p));
        let residual = y - a * &beta;
        CdState {
            beta,
            residual,
            col_sq_norm,
        }
    }

    /// One pass of coordinate minimisation over `coords`; `target` is the
    /// vector the residual tracks (`y` or `y - delta`).
    fn sweep(&mut self, a: &DMatrix<f64>, lambda: f64, coords: &[usize]) -> f64 {
        let n = a.nrows() as f64;
        let mut max_change = 0.0f64;
        for &j in coords {
            let q = self.col_sq_norm[j];
            if q == 0.0 {
                continue;
            }
            let old = self.beta[j];
            // gradient of the smooth part at beta_j = 0 after removing j's
            // contribution: c = (1/n) a_j' (r + a_j old)
            let c = a.column(j).dot(&self.residual) / n + q * old;
            let new = soft_threshold(c, lambda) / q;
            if new != old {
                let delta = new - old;
                self.residual.axpy(-delta, &a.column(j), 1.0);
                self.beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    /// Maximum violation of the Lasso stationarity conditions.
    fn kkt_residual(&self, a: &DMatrix<f64>, lambda: f64) -> f64 {
        let n = a.nrows() as f64;
        let grad = a.transpose() * &self.residual / n;
        let mut worst = 0.0f64;
        for j in 0..a.ncols() {
            let g = -grad[j];
            let v = if self.beta[j] > 0.0 {
                (g + lambda).abs()
            } else if self.beta[j] < 0.0 {
                (g - lambda).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    fn refresh_residual(&mut self, target: &DVector<f64>, a: &DMatrix<f64>) {
        self.residual = target - a * &self.beta;
    }
}

/// L2 Lasso: minimises `(1/2n)||y - A b||^2 + lambda ||b||_1`.
pub fn lasso_l2(y: &DVector<f64>, a: &DMatrix<f64>, lambda: f64) -> Result<LassoFit> {
    lasso_l2_with(y, a, lambda, &LassoOptions::default())
}

pub fn lasso_l2_with(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    lambda: f64,
    opts: &LassoOptions,
) -> Result<LassoFit> {
    check_shapes(y, a)?;
    if lambda < 0.0 {
        return Err(DrltError::param("lambda must be >= 0"));
    }
    let n = a.nrows() as f64;
    let p = a.ncols();
    let scale = kkt_scale(y, a);
    let mut st = CdState::new(y, a, opts.warm_beta.as_ref());
    let all: Vec<usize> = (0..p).collect();

    let objective = |st: &CdState| -> f64 {
        st.residual.norm_squared() / (2.0 * n) + lambda * st.beta.iter().map(|b| b.abs()).sum::<f64>()
    };

    let mut obj = objective(&st);
    let mut sweeps = 0usize;
    let mut settled = false;
    while sweeps < opts.max_sweeps {
        // active-set pass until stable, then a full pass to pull in new coords
        let active: Vec<usize> = (0..p).filter(|&j| st.beta[j] != 0.0).collect();
        if !active.is_empty() {
            st.sweep(a, lambda, &active);
            sweeps += 1;
        }
        st.sweep(a, lambda, &all);
        sweeps += 1;
        if sweeps % 200 < 2 {
            st.refresh_residual(y, a);
        }
        let new_obj = objective(&st);
        let rel = (obj - new_obj).abs() / obj.abs().max(1e-300);
        obj = new_obj;
        if rel < opts.rel_obj_tol && st.kkt_residual(a, lambda) / scale < opts.kkt_tol {
            settled = true;
            break;
        }
    }
    let kkt = st.kkt_residual(a, lambda) / scale;
    let converged = settled || kkt < opts.kkt_tol;
    Ok(LassoFit {
        beta_hat: st.beta.as_slice().to_vec(),
        lambda,
        objective: obj,
        kkt_residual: kkt,
        iterations: sweeps,
        converged,
        path: SolvePath::CoordinateDescent,
        final_smoothing: None,
    })
}

/// Joint robust Lasso: minimises
/// `(1/2n)||y - A b - d||^2 + l1 ||b||_1 + l2 ||d||_1`.
///
/// Block alternation: each outer sweep runs coordinate descent over `b`
/// against `y - d`, then sets `d_i = soft(y_i - a_i. b, n l2)` exactly.
pub fn robust_lasso(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
) -> Result<RobustLassoFit> {
    robust_lasso_with(y, a, lambda1, lambda2, &LassoOptions::default())
}

pub fn robust_lasso_with(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
    opts: &LassoOptions,
) -> Result<RobustLassoFit> {
    check_shapes(y, a)?;
    if lambda1 < 0.0 || lambda2 < 0.0 {
        return Err(DrltError::param("lambda1 and lambda2 must be >= 0"));
    }
    let n_usize = a.nrows();
    let n = n_usize as f64;
    let p = a.ncols();
    let scale = kkt_scale(y, a).max(lambda2 * n);

    let mut delta = opts
        .warm_delta
        .clone()
        .unwrap_or_else(|| DVector::zeros(n_usize));
    let mut target = y - &delta;
    let mut st = CdState::new(&target, a, opts.warm_beta.as_ref());
    let all: Vec<usize> = (0..p).collect();

    let objective = |st: &CdState, delta: &DVector<f64>| -> f64 {
        st.residual.norm_squared() / (2.0 * n)
            + lambda1 * st.beta.iter().map(|b| b.abs()).sum::<f64>()
            + lambda2 * delta.iter().map(|d| d.abs()).sum::<f64>()
    };

    let mut trace = Vec::new();
    let mut obj = objective(&st, &delta);
    if opts.record_trace {
        trace.push(obj);
    }
    let mut sweeps = 0usize;
    let mut settled = false;

    while sweeps < opts.max_sweeps {
        let active: Vec<usize> = (0..p).filter(|&j| st.beta[j] != 0.0).collect();
        if !active.is_empty() {
            st.sweep(a, lambda1, &active);
            sweeps += 1;
        }
        st.sweep(a, lambda1, &all);
        sweeps += 1;

        // exact d block: d_i = soft(y_i - a_i. b, n l2); the residual tracks
        // y - d - A b, so update it for the change in d
        let fit_res = &st.residual + &delta; // = y - A b
        let mut changed = false;
        for i in 0..n_usize {
            let new_d = soft_threshold(fit_res[i], n * lambda2);
            if new_d != delta[i] {
                st.residual[i] += delta[i] - new_d;
                delta[i] = new_d;
                changed = true;
            }
        }
        if changed {
            target = y - &delta;
        }
        if sweeps % 200 < 2 {
            st.refresh_residual(&target, a);
        }

        let new_obj = objective(&st, &delta);
        let rel = (obj - new_obj).abs() / obj.abs().max(1e-300);
        obj = new_obj;
        if opts.record_trace {
            trace.push(obj);
        }
        if rel < opts.rel_obj_tol
            && joint_kkt(&st, &delta, a, lambda1, lambda2) / scale < opts.kkt_tol
        {
            settled = true;
            break;
        }
    }
    let kkt = joint_kkt(&st, &delta, a, lambda1, lambda2) / scale;
    let converged = settled || kkt < opts.kkt_tol;
    Ok(RobustLassoFit {
        beta_hat: st.beta.as_slice().to_vec(),
        delta_hat: delta.as_slice().to_vec(),
        lambda1,
        lambda2,
        objective: obj,
        kkt_residual: kkt,
        iterations: sweeps,
        converged,
        objective_trace: trace,
    })
}

/// Maximum stationarity violation over both blocks of the robust Lasso.
fn joint_kkt(
    st: &CdState,
    delta: &DVector<f64>,
    a: &DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
) -> f64 {
    let n = a.nrows() as f64;
    let mut worst = st.kkt_residual(a, lambda1);
    for i in 0..a.nrows() {
        let g = -st.residual[i] / n;
        let v = if delta[i] > 0.0 {
            (g + lambda2).abs()
        } else if delta[i] < 0.0 {
            (g - lambda2).abs()
        } else {
            (g.abs() - lambda2).max(0.0)
        };
        worst = worst.max(v * n); // same scale as the beta block gradients
    }
    worst
}

fn check_shapes(y: &DVector<f64>, a: &DMatrix<f64>) -> Result<()> {
    if y.len() != a.nrows() {
        return Err(DrltError::dims(format!(
            "y has length {}, A has {} rows",
            y.len(),
            a.nrows()
        )));
    }
    if a.ncols() == 0 || a.nrows() == 0 {
        return Err(DrltError::param("A must be at least 1x1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn scalar_soft_threshold_solution() {
        // n=1, p=1, A=[[1]], y=[10], lambda=1: beta = sign(y) max(|y| - n lambda, 0) = 9
        let y = DVector::from_column_slice(&[10.0]);
        let a = dm(1, 1, &[1.0]);
        let fit = lasso_l2(&y, &a, 1.0).unwrap();
        assert!((fit.beta_hat[0] - 9.0).abs() < 1e-9, "beta = {}", fit.beta_hat[0]);
        assert!(fit.converged);
    }

    #[test]
    fn lambda_zero_recovers_least_squares() {
        let a = dm(2, 2, &[1.0, 2.0, 3.0, -1.0]);
        let x = DVector::from_column_slice(&[2.0, -1.5]);
        let y = &a * &x;
        let fit = lasso_l2(&y, &a, 0.0).unwrap();
        assert!((fit.beta()[0] - 2.0).abs() < 1e-8);
        assert!((fit.beta()[1] + 1.5).abs() < 1e-8);
    }

    #[test]
    fn large_lambda_zeroes_solution() {
        let a = dm(3, 4, &[1.0, -1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0]);
        let y = DVector::from_column_slice(&[4.0, -2.0, 1.0]);
        let n = 3.0;
        let thresh = (a.transpose() * &y / n).amax();
        let fit = lasso_l2(&y, &a, thresh * 1.0001).unwrap();
        assert!(fit.beta_hat.iter().all(|&b| b == 0.0));
        // subgradient oracle: at beta = 0 the gradient magnitude must not
        // exceed lambda for optimality
        assert!(fit.kkt_residual < 1e-6);
    }

    #[test]
    fn robust_lasso_zero_data() {
        let a = dm(2, 2, &[1.0, 1.0, -1.0, 1.0]);
        let y = DVector::zeros(2);
        let fit = robust_lasso(&y, &a, 0.1, 0.1).unwrap();
        assert!(fit.beta_hat.iter().all(|&b| b == 0.0));
        assert!(fit.delta_hat.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn robust_lasso_large_lambda2_matches_plain_lasso() {
        let a = dm(
            4,
            3,
            &[1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0],
        );
        let y = DVector::from_column_slice(&[3.0, -1.0, 2.0, 0.5]);
        let l1 = 0.05;
        let plain = lasso_l2(&y, &a, l1).unwrap();
        // threshold that kills the delta block: n*l2 >= ||y - A b||_inf
        let resid = (&y - &a * plain.beta()).amax();
        let l2 = (resid / 4.0) * 1.5 + 1.0;
        let fit = robust_lasso(&y, &a, l1, l2).unwrap();
        assert!(fit.delta_hat.iter().all(|&d| d == 0.0));
        for j in 0..3 {
            assert!(
                (fit.beta_hat[j] - plain.beta_hat[j]).abs() < 1e-5,
                "coordinate {j}: {} vs {}",
                fit.beta_hat[j],
                plain.beta_hat[j]
            );
        }
    }

    #[test]
    fn robust_lasso_delta_satisfies_soft_threshold_identity() {
        let a = dm(
            3,
            2,
            &[1.0, -1.0, -1.0, 1.0, 1.0, 1.0],
        );
        let y = DVector::from_column_slice(&[5.0, -3.0, 40.0]);
        let (l1, l2) = (0.08, 0.4);
        let fit = robust_lasso(&y, &a, l1, l2).unwrap();
        let r = &y - &a * fit.beta();
        for i in 0..3 {
            let expect = soft_threshold(r[i], 3.0 * l2);
            assert!(
                (fit.delta_hat[i] - expect).abs() < 1e-8,
                "delta[{i}] = {} vs soft threshold {expect}",
                fit.delta_hat[i]
            );
        }
    }

    #[test]
    fn robust_lasso_matches_grid_oracle() {
        // brute-force grid oracle on a 3x2 instance, 0.01 step
        let a = dm(3, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0]);
        let y = DVector::from_column_slice(&[1.2, 0.4, -0.3]);
        let (l1, l2) = (0.1, 0.1);

        // profile out delta (exact per-coordinate minimisation) and scan b
        let objective = |b0: f64, b1: f64| -> f64 {
            let beta = DVector::from_column_slice(&[b0, b1]);
            let r = &y - &a * &beta;
            let mut obj = l1 * (b0.abs() + b1.abs());
            for i in 0..3 {
                let d = soft_threshold(r[i], 3.0 * l2);
                obj += (r[i] - d) * (r[i] - d) / 6.0 + l2 * d.abs();
            }
            obj
        };
        let mut best = f64::INFINITY;
        let mut best_b = (0.0, 0.0);
        let steps = (-200..=200).map(|k| k as f64 * 0.01);
        for b0 in steps.clone() {
            for b1 in (-200..=200).map(|k| k as f64 * 0.01) {
                let o = objective(b0, b1);
                if o < best {
                    best = o;
                    best_b = (b0, b1);
                }
            }
        }
        let fit = robust_lasso(&y, &a, l1, l2).unwrap();
        assert!(
            (fit.objective - best).abs() < 1e-3,
            "solver objective {} vs grid {} at {:?}",
            fit.objective,
            best,
            best_b
        );
        assert!(fit.objective <= best + 1e-9, "solver must not be worse than the grid");
    }

    #[test]
    fn objective_field_is_consistent() {
        let a = dm(3, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0]);
        let y = DVector::from_column_slice(&[10.0, -4.0, 3.0]);
        let fit = robust_lasso(&y, &a, 0.2, 0.3).unwrap();
        let recomputed = fit.recompute_objective(&y, &a);
        assert!((fit.objective - recomputed).abs() / recomputed.abs().max(1e-12) < 1e-9);
    }

    #[test]
    fn monotone_objective_trace() {
        let a = dm(
            4,
            3,
            &[1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0],
        );
        let y = DVector::from_column_slice(&[3.0, -1.0, 12.0, 0.5]);
        let opts = LassoOptions {
            record_trace: true,
            ..Default::default()
        };
        let fit = robust_lasso_with(&y, &a, 0.05, 0.2, &opts).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn warm_start_converges_fast() {
        let a = dm(
            4,
            3,
            &[1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0],
        );
        let y = DVector::from_column_slice(&[3.0, -1.0, 12.0, 0.5]);
        let cold = robust_lasso(&y, &a, 0.05, 0.2).unwrap();
        let opts = LassoOptions {
            warm_beta: Some(cold.beta()),
            warm_delta: Some(cold.delta()),
            ..Default::default()
        };
        let warm = robust_lasso_with(&y, &a, 0.05, 0.2, &opts).unwrap();
        assert!(warm.iterations <= 6, "warm start took {} sweeps", warm.iterations);
        assert!((warm.objective - cold.objective).abs() < 1e-10);
    }

    #[test]
    fn non_convergence_is_flagged_not_fatal() {
        let a = dm(2, 2, &[1.0, 0.99999, 0.99999, 1.0]);
        let y = DVector::from_column_slice(&[1.0, -1.0]);
        let opts = LassoOptions {
            max_sweeps: 2,
            ..Default::default()
        };
        let fit = lasso_l2_with(&y, &a, 1e-9, &opts).unwrap();
        assert!(!fit.converged);
    }
}
