//! Evaluation metrics and the flag-discard-refit estimation pipeline.

use nalgebra::{DMatrix, DVector};

use crate::hypotest::{normal_quantile, TestReport};
use crate::solvers::{robust_lasso_with, LassoOptions, RobustLassoFit};
use crate::{DrltError, Result};

/// `sensitivity = TP / (TP + FN)`, `specificity = TN / (TN + FP)`.
/// An empty positive (resp. negative) class leaves the corresponding rate
/// missing.
pub fn sensitivity_specificity(
    decisions: &[bool],
    truth: &[bool],
) -> Result<(Option<f64>, Option<f64>)> {
    if decisions.len() != truth.len() {
        return Err(DrltError::dims("decisions and truth lengths differ"));
    }
    let mut tp = 0usize;
    let mut fn_ = 0usize;
    let mut tn = 0usize;
    let mut fp = 0usize;
    for (&d, &t) in decisions.iter().zip(truth) {
        match (d, t) {
            (true, true) => tp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
        }
    }
    let sens = if tp + fn_ > 0 {
        Some(tp as f64 / (tp + fn_) as f64)
    } else {
        None
    };
    let spec = if tn + fp > 0 {
        Some(tn as f64 / (tn + fp) as f64)
    } else {
        None
    };
    Ok((sens, spec))
}

/// Relative root mean squared error `||beta* - b|| / ||beta*||`.
pub fn rrmse(beta_hat: &DVector<f64>, beta_star: &DVector<f64>) -> Result<f64> {
    if beta_hat.len() != beta_star.len() {
        return Err(DrltError::dims("rrmse: length mismatch"));
    }
    let denom = beta_star.norm();
    if denom == 0.0 {
        return Err(DrltError::Degenerate("rrmse undefined for beta* = 0".into()));
    }
    Ok((beta_star - beta_hat).norm() / denom)
}

/// Result of the flag-discard-refit pipeline.
#[derive(Debug, Clone)]
pub struct RefitOutcome {
    pub fit: RobustLassoFit,
    /// Rows kept after discarding flagged measurements.
    pub kept_rows: Vec<usize>,
}

/// Drops the measurements whose MME null was rejected by `report` and
/// refits the robust Lasso on the remaining rows.
pub fn flag_discard_refit(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    report: &TestReport,
    lambda1: f64,
    lambda2: f64,
    opts: &LassoOptions,
) -> Result<RefitOutcome> {
    let n = a.nrows();
    if report.decisions.len() != n {
        return Err(DrltError::dims("report length != rows of A"));
    }
    let kept_rows: Vec<usize> = (0..n).filter(|&i| !report.decisions[i]).collect();
    if kept_rows.is_empty() {
        return Err(DrltError::Degenerate(
            "every measurement was flagged; nothing left to refit".into(),
        ));
    }
    let p = a.ncols();
    let mut a_kept = DMatrix::zeros(kept_rows.len(), p);
    let mut y_kept = DVector::zeros(kept_rows.len());
    for (r, &i) in kept_rows.iter().enumerate() {
        a_kept.row_mut(r).copy_from(&a.row(i));
        y_kept[r] = y[i];
    }
    let fit = robust_lasso_with(&y_kept, &a_kept, lambda1, lambda2, opts)?;
    Ok(RefitOutcome { fit, kept_rows })
}

/// Sorted empirical values paired with the normal quantiles
/// `Phi^{-1}((k - 0.5) / m)`.
pub fn qq_pairs(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    let m = samples.len();
    if m < 2 {
        return Err(DrltError::param("qq_pairs needs at least 2 samples"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(k, v)| (normal_quantile((k as f64 + 0.5) / m as f64), v))
        .collect())
}
