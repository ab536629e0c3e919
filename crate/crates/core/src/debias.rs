//! Debiasing machinery: the approximate inverse `M`, the optimal weight
//! matrix `W`, the debiased estimates, and the covariance diagonals that
//! standardise the test statistics.
//!
//! Debiased estimates add a weighted residual correction to the robust
//! Lasso fit:
//!
//! ```text
//!   b_W = b + (1/n) W' (y - A b - d)
//!   d_W = y - A b_W
//! ```
//!
//! With `W = A` these back the DRLT tests; with the designed `W` (which
//! minimises the summed column energy subject to the bias-control
//! constraints C0-C3) they back the ODRLT tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linmodel::ProblemInstance;
use crate::solvers::{
    solve_box_qp, AffineMap, BoxQpOptions, BoxQpProblem, QpStatus, QuadForm, RobustLassoFit,
};
use crate::{DrltError, Result};

/// How a weight matrix was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsSource {
    /// `W = A`, the un-designed choice backing the DRLT tests.
    IdentityOfA,
    /// Output of the weight-design program.
    Designed,
    /// Design infeasible; fell back to `W = A`.
    Fallback,
}

/// Weight matrix with its provenance and constraint diagnostics.
#[derive(Debug, Clone)]
pub struct DebiasWeights {
    pub w: DMatrix<f64>,
    pub source: WeightsSource,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    /// Max violations of (C0, C1, C2, C3) at `w`.
    pub constraint_residuals: [f64; 4],
    /// Design objective `sum_j w_j' w_j` at `w`.
    pub objective: f64,
    /// Whether the warm-start candidate `A` itself satisfied C0-C3.
    pub a_feasible: bool,
    pub iterations: usize,
}

impl DebiasWeights {
    /// The DRLT choice `W = A` (no design step).
    pub fn identity_of_a(a: &DMatrix<f64>) -> Self {
        let np = (a.nrows() * a.ncols()) as f64;
        DebiasWeights {
            w: a.clone(),
            source: WeightsSource::IdentityOfA,
            mu1: f64::NAN,
            mu2: f64::NAN,
            mu3: f64::NAN,
            constraint_residuals: [0.0; 4],
            objective: np,
            a_feasible: true,
            iterations: 0,
        }
    }
}

/// Approximate inverse of the sample Gram matrix.
#[derive(Debug, Clone)]
pub struct ApproxInverse {
    pub m: DMatrix<f64>,
    pub mu: f64,
    pub feasible: bool,
    pub iterations: usize,
}

/// Constraint levels for the weight design: `mu1 = 2 sqrt(2 log p / n)`,
/// `mu2 = 2 sqrt(log(2np) / (np)) + 1/n`, `mu3 = (2 / sqrt(1 - n/p)) *
/// sqrt(2 log n / p)` (natural logs). Requires `n < p`.
pub fn default_mus(n: usize, p: usize) -> Result<(f64, f64, f64)> {
    if n >= p {
        return Err(DrltError::param(format!(
            "weight design requires n < p, got n={n}, p={p}"
        )));
    }
    let nf = n as f64;
    let pf = p as f64;
    let mu1 = 2.0 * (2.0 * pf.ln() / nf).sqrt();
    let mu2 = 2.0 * ((2.0 * nf * pf).ln() / (nf * pf)).sqrt() + 1.0 / nf;
    let mu3 = 2.0 / (1.0 - nf / pf).sqrt() * (2.0 * nf.ln() / pf).sqrt();
    Ok((mu1, mu2, mu3))
}

/// Builds the approximate inverse `M` of `Sigma = A'A / n`: each row `m_i`
/// minimises `m_i' Sigma m_i` subject to `||Sigma m_i - e_i||_inf <= mu`.
/// The rows are independent and solved as one batched box QP (the variable
/// is `M'`, column `i` of which is `m_i`). If any row is infeasible the
/// whole construction falls back to `M = I`.
pub fn build_m(a: &DMatrix<f64>, mu: f64) -> Result<ApproxInverse> {
    build_m_with(a, mu, &BoxQpOptions::default())
}

pub fn build_m_with(a: &DMatrix<f64>, mu: f64, opts: &BoxQpOptions) -> Result<ApproxInverse> {
    if mu <= 0.0 {
        return Err(DrltError::param("mu must be > 0"));
    }
    let n = a.nrows() as f64;
    let p = a.ncols();
    let sigma_hat = (a.transpose() * a) / n;

    let problem = BoxQpProblem {
        var_shape: (p, p),
        quad: QuadForm::LeftSym(sigma_hat.clone()),
        maps: vec![AffineMap {
            left: Some(sigma_hat),
            right: None,
            scale: 1.0,
            offset: -DMatrix::identity(p, p),
            lower: Some(-mu),
            upper: Some(mu),
        }],
        col_norm_cap: None,
    };
    let warm_scale = (1.0 - mu).clamp(0.0, 1.0);
    let mut qp_opts = opts.clone();
    qp_opts.warm = Some(warm_scale * DMatrix::identity(p, p));
    let sol = solve_box_qp(&problem, &qp_opts)?;

    if sol.status == QpStatus::Infeasible {
        return Ok(ApproxInverse {
            m: DMatrix::identity(p, p),
            mu,
            feasible: false,
            iterations: sol.iterations,
        });
    }
    Ok(ApproxInverse {
        m: sol.x.transpose(),
        mu,
        feasible: true,
        iterations: sol.iterations,
    })
}

/// Options for [`design_w`].
#[derive(Debug, Clone)]
pub struct DesignWOptions {
    pub qp: BoxQpOptions,
}

impl Default for DesignWOptions {
    fn default() -> Self {
        let qp = BoxQpOptions {
            max_iter: 4_000,
            stall_window: 200,
            rel_improve: 1e-7,
            ..Default::default()
        };
        DesignWOptions { qp }
    }
}

/// Max violations of (C0, C1, C2, C3) at a candidate `w`.
pub fn weight_constraint_residuals(
    w: &DMatrix<f64>,
    a: &DMatrix<f64>,
    mus: (f64, f64, f64),
) -> [f64; 4] {
    let (mu1, mu2, mu3) = mus;
    let n = a.nrows() as f64;
    let p = a.ncols() as f64;
    let q = 1.0 - n / p;

    let mut c0 = 0.0f64;
    for j in 0..w.ncols() {
        c0 = c0.max(w.column(j).norm_squared() / n - 1.0);
    }
    let wta = w.transpose() * a / n;
    let mut c1 = 0.0f64;
    for i in 0..wta.nrows() {
        for j in 0..wta.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            c1 = c1.max((target - wta[(i, j)]).abs() - mu1);
        }
    }
    let wat = w * a.transpose() / n;
    let m2 = (a - &wat * a) / p;
    let c2 = (m2.amax() - mu2).max(0.0);
    let mut c3 = 0.0f64;
    let c3_scale = n / (p * q.sqrt());
    for i in 0..wat.nrows() {
        for j in 0..wat.ncols() {
            let target = if i == j { p / n } else { 0.0 };
            c3 = c3.max(c3_scale * (wat[(i, j)] - target).abs() - mu3);
        }
    }
    [c0.max(0.0), c1.max(0.0), c2, c3.max(0.0)]
}

/// Designs the optimal weight matrix: minimises `sum_j w_j' w_j` subject to
///
/// - C0: `w_j' w_j / n <= 1` for every column `j`,
/// - C1: `|I_p - W'A / n|_inf <= mu1`,
/// - C2: `|(1/p)(I_n - W A'/n) A|_inf <= mu2`,
/// - C3: `(n / (p sqrt(1 - n/p))) |W A'/n - (p/n) I_n|_inf <= mu3`,
///
/// warm-started at `W = A`. If the program is infeasible the fallback is
/// `W = A` with `source = Fallback`.
pub fn design_w(a: &DMatrix<f64>, mu1: f64, mu2: f64, mu3: f64) -> Result<DebiasWeights> {
    design_w_with(a, mu1, mu2, mu3, &DesignWOptions::default())
}

pub fn design_w_with(
    a: &DMatrix<f64>,
    mu1: f64,
    mu2: f64,
    mu3: f64,
    opts: &DesignWOptions,
) -> Result<DebiasWeights> {
    let n_usize = a.nrows();
    let p_usize = a.ncols();
    if n_usize >= p_usize {
        return Err(DrltError::param("weight design requires n < p"));
    }
    let n = n_usize as f64;
    let p = p_usize as f64;
    let q = 1.0 - n / p;
    let gram = a.transpose() * a; // A'A, p x p

    let maps = vec![
        // C1: (1/n) A' W - I_p in [-mu1, mu1]
        AffineMap {
            left: Some(a.transpose()),
            right: None,
            scale: 1.0 / n,
            offset: -DMatrix::identity(p_usize, p_usize),
            lower: Some(-mu1),
            upper: Some(mu1),
        },
        // C2: A/p - (1/(np)) W (A'A) in [-mu2, mu2]
        AffineMap {
            left: None,
            right: Some(gram),
            scale: -1.0 / (n * p),
            offset: a / p,
            lower: Some(-mu2),
            upper: Some(mu2),
        },
        // C3: (1/(p sqrt(q))) W A' - (1/sqrt(q)) I_n in [-mu3, mu3]
        AffineMap {
            left: None,
            right: Some(a.transpose().clone_owned()),
            scale: 1.0 / (p * q.sqrt()),
            offset: -DMatrix::identity(n_usize, n_usize) / q.sqrt(),
            lower: Some(-mu3),
            upper: Some(mu3),
        },
    ];
    let problem = BoxQpProblem {
        var_shape: (n_usize, p_usize),
        quad: QuadForm::ScaledIdentity(1.0),
        maps,
        col_norm_cap: Some(n),
    };
    let a_resid = weight_constraint_residuals(a, a, (mu1, mu2, mu3));
    let a_feasible = a_resid.iter().all(|&v| v <= opts.qp.tol);

    let mut qp_opts = opts.qp.clone();
    qp_opts.warm = Some(a.clone());
    let sol = solve_box_qp(&problem, &qp_opts)?;

    let feasible = sol.status != QpStatus::Infeasible
        && weight_constraint_residuals(&sol.x, a, (mu1, mu2, mu3))
            .iter()
            .all(|&v| v <= 10.0 * opts.qp.tol);
    if !feasible {
        return Ok(DebiasWeights {
            w: a.clone(),
            source: WeightsSource::Fallback,
            mu1,
            mu2,
            mu3,
            constraint_residuals: a_resid,
            objective: n * p,
            a_feasible,
            iterations: sol.iterations,
        });
    }
    let resid = weight_constraint_residuals(&sol.x, a, (mu1, mu2, mu3));
    Ok(DebiasWeights {
        objective: sol.x.iter().map(|v| v * v).sum(),
        w: sol.x,
        source: WeightsSource::Designed,
        mu1,
        mu2,
        mu3,
        constraint_residuals: resid,
        a_feasible,
        iterations: sol.iterations,
    })
}

/// Debiased signal estimate `b_W = b + (1/n) W' (y - A b - d)`.
pub fn debias_beta(
    fit: &RobustLassoFit,
    w: &DMatrix<f64>,
    y: &DVector<f64>,
    a: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    check_debias_shapes(fit, w, y, a)?;
    let n = a.nrows() as f64;
    let residual = y - a * fit.beta() - fit.delta();
    Ok(fit.beta() + (w.transpose() * residual) / n)
}

/// Debiased MME estimate `d_W = d + (I - W A'/n)(y - A b - d)`.
///
/// This is the form whose noise term has covariance `Sigma_delta` (the
/// variance used to standardise the MME test statistic). For `W = A` it
/// coincides exactly with `y - A b_W`; see [`debias_delta_y_form`].
pub fn debias_delta(
    fit: &RobustLassoFit,
    w: &DMatrix<f64>,
    y: &DVector<f64>,
    a: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    check_debias_shapes(fit, w, y, a)?;
    let n = a.nrows() as f64;
    let residual = y - a * fit.beta() - fit.delta();
    let correction = &residual - w * (a.transpose() * &residual) / n;
    Ok(fit.delta() + correction)
}

/// The `y - A b_W` form of the debiased MME estimate. Identical to
/// [`debias_delta`] when `W A' = A W'` (in particular for `W = A`).
pub fn debias_delta_y_form(
    fit: &RobustLassoFit,
    w: &DMatrix<f64>,
    y: &DVector<f64>,
    a: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let beta_w = debias_beta(fit, w, y, a)?;
    Ok(y - a * beta_w)
}

/// Diagonal of `(I - AA'/n)(I - AA'/n)'`.
pub fn sigma_a_diag(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let g = DMatrix::identity(n, n) - a * a.transpose() / n as f64;
    (0..n).map(|i| g.row(i).norm_squared()).collect()
}

/// `Sigma_beta_jj = sigma^2 w_j' w_j / n`.
pub fn sigma_beta_diag(w: &DMatrix<f64>, sigma: f64) -> Vec<f64> {
    let n = w.nrows() as f64;
    (0..w.ncols())
        .map(|j| sigma * sigma * w.column(j).norm_squared() / n)
        .collect()
}

/// `Sigma_delta_ii = sigma^2 [(I - WA'/n)(I - WA'/n)']_ii`.
pub fn sigma_delta_diag(w: &DMatrix<f64>, a: &DMatrix<f64>, sigma: f64) -> Vec<f64> {
    let n = a.nrows();
    let g = DMatrix::identity(n, n) - w * a.transpose() / n as f64;
    (0..n)
        .map(|i| sigma * sigma * g.row(i).norm_squared())
        .collect()
}

/// The three additive terms of each debiased-error channel (simulation
/// diagnostics; requires ground truth). Their sums reproduce
/// `b_W - beta*` and `d_W - delta*` exactly.
#[derive(Debug, Clone)]
pub struct DebiasErrorDecomposition {
    /// `(1/n) W' eta`.
    pub beta_noise: DVector<f64>,
    /// `(I_p - W'A/n)(b - beta*)`.
    pub beta_bias_beta: DVector<f64>,
    /// `(1/n) W' (delta* - d)`.
    pub beta_bias_delta: DVector<f64>,
    /// `(I_n - WA'/n) eta`.
    pub delta_noise: DVector<f64>,
    /// `(I_n - WA'/n) A (beta* - b)`.
    pub delta_bias_beta: DVector<f64>,
    /// `-(1/n) W A' (delta* - d)`.
    pub delta_bias_delta: DVector<f64>,
}

pub fn decompose_debias_error(
    instance: &ProblemInstance,
    fit: &RobustLassoFit,
    w: &DMatrix<f64>,
) -> Result<DebiasErrorDecomposition> {
    let a = instance.a.to_dmatrix();
    let y = instance.y.to_dvector();
    check_debias_shapes(fit, w, &y, &a)?;
    let n = a.nrows() as f64;
    let beta_star = instance.beta_star.to_dvector();
    let delta_star = instance.delta_star.to_dvector();
    let eta = &y - &a * &beta_star - &delta_star;

    let beta_err = fit.beta() - &beta_star;
    let delta_gap = &delta_star - fit.delta();

    let beta_noise = (w.transpose() * &eta) / n;
    let beta_bias_beta = &beta_err - (w.transpose() * (&a * &beta_err)) / n;
    let beta_bias_delta = (w.transpose() * &delta_gap) / n;

    let wat_eta = w * (a.transpose() * &eta) / n;
    let delta_noise = &eta - wat_eta;
    let a_beta_err = &a * (-&beta_err);
    let delta_bias_beta = &a_beta_err - w * (a.transpose() * &a_beta_err) / n;
    let delta_bias_delta = -(w * (a.transpose() * &delta_gap)) / n;

    Ok(DebiasErrorDecomposition {
        beta_noise,
        beta_bias_beta,
        beta_bias_delta,
        delta_noise,
        delta_bias_beta,
        delta_bias_delta,
    })
}

fn check_debias_shapes(
    fit: &RobustLassoFit,
    w: &DMatrix<f64>,
    y: &DVector<f64>,
    a: &DMatrix<f64>,
) -> Result<()> {
    if w.nrows() != a.nrows() || w.ncols() != a.ncols() {
        return Err(DrltError::dims("W and A shapes differ"));
    }
    if y.len() != a.nrows() {
        return Err(DrltError::dims("y length != rows of A"));
    }
    if fit.beta_hat.len() != a.ncols() || fit.delta_hat.len() != a.nrows() {
        return Err(DrltError::dims("fit dimensions do not match A"));
    }
    Ok(())
}
