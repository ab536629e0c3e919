//! Sparse-regression solvers and the box-constrained QP engine.
//!
//! The joint robust Lasso minimises
//! `(1/2n) ||y - A b - d||^2 + l1 ||b||_1 + l2 ||d||_1` by block alternation:
//! coordinate-descent sweeps over `b` and an exact per-coordinate soft
//! threshold for `d`. The plain L2 Lasso drops the `d` block, and the L1
//! Lasso replaces the quadratic fidelity with `||y - A b||_1`, solved by
//! Huber smoothing with a decreasing smoothing parameter.

mod boxqp;
mod l1fit;
mod lasso;

pub use boxqp::{
    solve_box_qp, AffineMap, BoxQpOptions, BoxQpProblem, BoxQpSolution, QpStatus, QuadForm,
};
pub use l1fit::{lasso_l1, lasso_l1_with, L1Options};
pub use lasso::{
    lasso_l2, lasso_l2_with, robust_lasso, robust_lasso_with, LassoFit, LassoOptions, SolvePath,
};

use serde::{Deserialize, Serialize};

/// Soft-threshold operator `sign(x) * max(|x| - t, 0)`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Theorem-default regularizers `l1 = 4 sigma sqrt(log p) / sqrt(n)` and
/// `l2 = 4 sigma sqrt(log n) / n` (natural logs).
pub fn default_lambdas(sigma: f64, n: usize, p: usize) -> crate::Result<(f64, f64)> {
    if n < 2 || p < 2 {
        return Err(crate::DrltError::param(format!(
            "default_lambdas requires n, p >= 2, got n={n}, p={p}"
        )));
    }
    if sigma < 0.0 {
        return Err(crate::DrltError::param("sigma must be >= 0"));
    }
    let nf = n as f64;
    let pf = p as f64;
    let l1 = 4.0 * sigma * pf.ln().sqrt() / nf.sqrt();
    let l2 = 4.0 * sigma * nf.ln().sqrt() / nf;
    Ok((l1, l2))
}

/// Result of the joint robust Lasso fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustLassoFit {
    pub beta_hat: Vec<f64>,
    pub delta_hat: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Final value of `(1/2n)||y - A b - d||^2 + l1 ||b||_1 + l2 ||d||_1`.
    pub objective: f64,
    /// Maximum scaled violation of the stationarity conditions.
    pub kkt_residual: f64,
    /// Coordinate sweeps performed.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each sweep; non-increasing by construction.
    pub objective_trace: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lambdas_plug_in() {
        // sigma=1, n=100, p=500: l1 = 4 sqrt(ln 500)/10, l2 = 4 sqrt(ln 100)/100
        let (l1, l2) = default_lambdas(1.0, 100, 500).unwrap();
        let expect1 = 4.0 * (500.0f64).ln().sqrt() / 10.0;
        let expect2 = 4.0 * (100.0f64).ln().sqrt() / 100.0;
        assert!((l1 - expect1).abs() < 1e-15);
        assert!((l2 - expect2).abs() < 1e-15);
        // independent calculator values
        assert!((l1 - 0.997_164_63).abs() < 1e-6, "l1 = {l1}");
        assert!((l2 - 0.085_838_64).abs() < 1e-6, "l2 = {l2}");
    }

    #[test]
    fn default_lambdas_zero_sigma() {
        let (l1, l2) = default_lambdas(0.0, 50, 80).unwrap();
        assert_eq!((l1, l2), (0.0, 0.0));
    }

    #[test]
    fn lambda2_below_lambda1_when_n_below_p() {
        for &(n, p) in &[(10usize, 20usize), (100, 500), (400, 500), (499, 500)] {
            let (l1, l2) = default_lambdas(1.7, n, p).unwrap();
            assert!(l2 < l1, "n={n}, p={p}: l2={l2} >= l1={l1}");
        }
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(2.0, 0.0), 2.0);
    }
}
