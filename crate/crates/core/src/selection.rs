//! Hyperparameter and threshold selection: the normality-gated grid search
//! with 10-fold cross-validation for `(lambda1, lambda2)`, the clairvoyant
//! Youden threshold used by the robust-Lasso comparator, and RANSAC
//! consensus fitting.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{rng_for, STREAM_RANSAC, STREAM_SELECTION};
use crate::debias::{debias_beta, debias_delta, sigma_beta_diag, sigma_delta_diag, DebiasWeights};
use crate::hypotest::lilliefors_test;
use crate::solvers::{
    lasso_l1_with, lasso_l2_with, robust_lasso_with, L1Options, LassoOptions,
};
use crate::{DrltError, Result};

/// Candidate grid for `(lambda1, lambda2)`.
///
/// The default axes are `lambda1 = e^k` and `lambda2 = e^k / sqrt(n)` for
/// `k = 1, 1.25, ..., 7`. The `1/sqrt(n)` on the second axis converts the
/// grid to the `(A | sqrt(n) I)` parameterisation in which the MME penalty
/// is scale-matched to the signal penalty; without it the smallest grid
/// value already soft-thresholds the per-measurement estimates at about
/// ten noise standard deviations and the grid covers no useful range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    /// Fraction of coordinates that must pass the normality gate (0.70).
    pub gate_fraction: f64,
    /// Gate significance level (0.01).
    pub gate_alpha: f64,
}

impl LambdaGrid {
    fn log_range(step: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 1.0f64;
        while k <= 7.0 + 1e-9 {
            out.push(k.exp());
            k += step;
        }
        out
    }

    /// The log-range `[1 : 0.25 : 7]` (natural logs) on both axes, with the
    /// `lambda2` axis divided by `sqrt(n)`.
    pub fn paper_default(n: usize) -> Self {
        let v = Self::log_range(0.25);
        let root_n = (n as f64).sqrt();
        LambdaGrid {
            lambda1: v.clone(),
            lambda2: v.iter().map(|x| x / root_n).collect(),
            gate_fraction: 0.70,
            gate_alpha: 0.01,
        }
    }

    /// Coarser log-step 0.5 grid for desk-scale runs.
    pub fn coarse(n: usize) -> Self {
        let v = Self::log_range(0.5);
        let root_n = (n as f64).sqrt();
        LambdaGrid {
            lambda1: v.clone(),
            lambda2: v.iter().map(|x| x / root_n).collect(),
            gate_fraction: 0.70,
            gate_alpha: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", &self.lambda1), ("lambda2", &self.lambda2)] {
            if v.is_empty() {
                return Err(DrltError::param(format!("{name} grid is empty")));
            }
            if !v.windows(2).all(|w| w[1] > w[0]) {
                return Err(DrltError::param(format!("{name} grid is not increasing")));
            }
        }
        if !(0.0..=1.0).contains(&self.gate_fraction) {
            return Err(DrltError::param("gate_fraction must lie in [0,1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Noise redraws backing the Stage-1 normality gate.
    pub redraws: usize,
    /// Cross-validation folds.
    pub folds: usize,
    /// Seed for the deterministic fold assignment.
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            redraws: 100,
            folds: 10,
            seed: 0,
        }
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SelectionTraceRow {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gate_pass_beta: f64,
    pub gate_pass_delta: f64,
    pub gate_ok: bool,
    pub cv_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda1: f64,
    pub lambda2: f64,
    /// No grid point passed the Stage-1 gate; fell back to the pure CV
    /// minimum over the full grid.
    pub gate_fallback: bool,
    pub survivors: usize,
    pub trace: Vec<SelectionTraceRow>,
}

impl LambdaSelection {
    /// Writes the selection trace as CSV.
    pub fn write_trace_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(b"lambda1,lambda2,gate_pass_beta,gate_pass_delta,gate_ok,cv_error\n")?;
        for r in &self.trace {
            out.write_all(
                format!(
                    "{},{},{},{},{},{}\n",
                    r.lambda1,
                    r.lambda2,
                    r.gate_pass_beta,
                    r.gate_pass_delta,
                    u8::from(r.gate_ok),
                    r.cv_error
                )
                .as_bytes(),
            )?;
        }
        Ok(())
    }
}

/// Two-stage selection of `(lambda1, lambda2)`.
///
/// Stage 1 keeps grid pairs for which the Lilliefors test at
/// `grid.gate_alpha` passes for at least `grid.gate_fraction` of the
/// coordinates of both standardised debiased statistics, computed over
/// `cfg.redraws` fresh-noise measurement vectors supplied by `redraw`.
/// Stage 2 picks the survivor minimising the mean 10-fold CV error on `y`.
/// With no survivors the selection falls back to the pure CV minimum over
/// the whole grid and sets `gate_fallback`. When `sigma == 0` the gate is
/// skipped entirely (no noise distribution to test).
pub fn select_lambdas(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    weights: &DebiasWeights,
    sigma: f64,
    redraw: &(dyn Fn(u64) -> DVector<f64> + Sync),
    grid: &LambdaGrid,
    cfg: &SelectionConfig,
) -> Result<LambdaSelection> {
    grid.validate()?;
    let n = a.nrows();
    if cfg.folds < 2 || n < cfg.folds {
        return Err(DrltError::param(format!(
            "need 2 <= folds <= n, got folds={} n={n}",
            cfg.folds
        )));
    }
    let p = a.ncols();
    let run_gate = sigma > 0.0 && cfg.redraws > 1;
    let (sb, sd) = if run_gate {
        (
            sigma_beta_diag(&weights.w, sigma),
            sigma_delta_diag(&weights.w, a, sigma),
        )
    } else {
        (vec![], vec![])
    };

    let pairs: Vec<(usize, f64, f64)> = grid
        .lambda1
        .iter()
        .enumerate()
        .flat_map(|(i, &l1)| {
            grid.lambda2
                .iter()
                .enumerate()
                .map(move |(j, &l2)| (i * 10_000 + j, l1, l2))
        })
        .collect();

    let rows: Vec<(usize, SelectionTraceRow)> = pairs
        .par_iter()
        .map(|&(key, l1, l2)| {
            let (gb, gd, ok) = if run_gate {
                gate_pass_fractions(a, weights, &sb, &sd, l1, l2, redraw, cfg, grid)
            } else {
                (1.0, 1.0, true)
            };
            let cv = cv_error(y, a, l1, l2, cfg.folds, cfg.seed).unwrap_or(f64::INFINITY);
            (
                key,
                SelectionTraceRow {
                    lambda1: l1,
                    lambda2: l2,
                    gate_pass_beta: gb,
                    gate_pass_delta: gd,
                    gate_ok: ok,
                    cv_error: cv,
                },
            )
        })
        .collect();

    let mut rows = rows;
    rows.sort_by_key(|(key, _)| *key);
    let trace: Vec<SelectionTraceRow> = rows.into_iter().map(|(_, r)| r).collect();

    let survivors = trace.iter().filter(|r| r.gate_ok).count();
    let pick = |pool: &mut dyn Iterator<Item = &SelectionTraceRow>| -> Option<(f64, f64)> {
        // minimum CV error, ties resolved by grid order (trace order)
        let mut best: Option<&SelectionTraceRow> = None;
        for r in pool {
            let better = match best {
                None => true,
                Some(b) => r.cv_error < b.cv_error,
            };
            if better {
                best = Some(r);
            }
        }
        best.map(|r| (r.lambda1, r.lambda2))
    };

    let (selected, gate_fallback) = if survivors > 0 {
        let sel = pick(&mut trace.iter().filter(|r| r.gate_ok));
        (sel, false)
    } else {
        (pick(&mut trace.iter()), true)
    };
    let (lambda1, lambda2) =
        selected.ok_or_else(|| DrltError::Degenerate("empty selection grid".into()))?;
    let _ = p;
    Ok(LambdaSelection {
        lambda1,
        lambda2,
        gate_fallback,
        survivors,
        trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn gate_pass_fractions(
    a: &DMatrix<f64>,
    weights: &DebiasWeights,
    sb: &[f64],
    sd: &[f64],
    l1: f64,
    l2: f64,
    redraw: &(dyn Fn(u64) -> DVector<f64> + Sync),
    cfg: &SelectionConfig,
    grid: &LambdaGrid,
) -> (f64, f64, bool) {
    let n = a.nrows();
    let p = a.ncols();
    let root_n = (n as f64).sqrt();
    let mut beta_stats = vec![0.0f64; p * cfg.redraws];
    let mut delta_stats = vec![0.0f64; n * cfg.redraws];
    let mut opts = LassoOptions {
        max_sweeps: 4_000,
        ..Default::default()
    };
    for k in 0..cfg.redraws {
        let yk = redraw(k as u64);
        let fit = match robust_lasso_with(&yk, a, l1, l2, &opts) {
            Ok(f) => f,
            Err(_) => return (0.0, 0.0, false),
        };
        let bw = match debias_beta(&fit, &weights.w, &yk, a) {
            Ok(v) => v,
            Err(_) => return (0.0, 0.0, false),
        };
        let dw = match debias_delta(&fit, &weights.w, &yk, a) {
            Ok(v) => v,
            Err(_) => return (0.0, 0.0, false),
        };
        for j in 0..p {
            beta_stats[j * cfg.redraws + k] = root_n * bw[j] / sb[j].sqrt();
        }
        for i in 0..n {
            delta_stats[i * cfg.redraws + k] = dw[i] / sd[i].sqrt();
        }
        // warm-start the next redraw
        opts.warm_beta = Some(fit.beta());
        opts.warm_delta = Some(fit.delta());
    }
    let pass_fraction = |stats: &[f64], coords: usize| -> f64 {
        let mut passed = 0usize;
        for c in 0..coords {
            let slice = &stats[c * cfg.redraws..(c + 1) * cfg.redraws];
            match lilliefors_test(slice, grid.gate_alpha) {
                Ok(out) if !out.reject => passed += 1,
                _ => {}
            }
        }
        passed as f64 / coords as f64
    };
    let gb = pass_fraction(&beta_stats, p);
    let gd = pass_fraction(&delta_stats, n);
    (
        gb,
        gd,
        gb >= grid.gate_fraction && gd >= grid.gate_fraction,
    )
}

/// Deterministic fold assignment: a seeded shuffle of `0..n` split into
/// `folds` nearly equal chunks.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(seed, STREAM_SELECTION);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut at = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(idx[at..at + len].to_vec());
        at += len;
    }
    out
}

/// Mean 10-fold cross-validation error
/// `||y_cv - A_cv b - I_cv d||^2` of the robust Lasso.
///
/// Each fold fits on the remaining rows. Held-out coordinates of `d` carry
/// no data term, so the `l1` penalty zeroes them and the validation error
/// reduces to the squared prediction residual `||y_cv - A_cv b||^2`. (The
/// alternative of completing `d` by soft-thresholding the held-out
/// residuals makes the error monotone in `lambda2` and the selection
/// degenerate.)
pub fn cv_error(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
    folds: usize,
    seed: u64,
) -> Result<f64> {
    let n = a.nrows();
    if folds < 2 || folds > n {
        return Err(DrltError::param(format!(
            "need 2 <= folds <= n = {n}, got {folds}"
        )));
    }
    let p = a.ncols();
    let assignment = fold_assignment(n, folds, seed);
    let mut total = 0.0;
    let opts = LassoOptions {
        max_sweeps: 4_000,
        ..Default::default()
    };
    for val_rows in &assignment {
        let val_set: std::collections::HashSet<usize> = val_rows.iter().copied().collect();
        let train_rows: Vec<usize> = (0..n).filter(|i| !val_set.contains(i)).collect();
        let n_train = train_rows.len();
        let mut a_train = DMatrix::zeros(n_train, p);
        let mut y_train = DVector::zeros(n_train);
        for (r, &i) in train_rows.iter().enumerate() {
            a_train.row_mut(r).copy_from(&a.row(i));
            y_train[r] = y[i];
        }
        let fit = robust_lasso_with(&y_train, &a_train, lambda1, lambda2, &opts)?;
        let beta = fit.beta();
        let mut err = 0.0;
        for &i in val_rows {
            let resid = y[i] - a.row(i).transpose().dot(&beta);
            err += resid * resid;
        }
        let _ = n_train;
        total += err;
    }
    Ok(total / folds as f64)
}

/// Clairvoyant threshold maximising `sensitivity + specificity - 1` for the
/// rule `score >= tau`. Candidates are the sorted unique scores and the
/// midpoints of consecutive unique scores; ties resolve to the smallest
/// maximising candidate.
pub fn youden_threshold(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(DrltError::dims("scores and truth lengths differ"));
    }
    let positives = truth.iter().filter(|&&t| t).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(DrltError::Degenerate(
            "youden threshold needs at least one positive and one negative".into(),
        ));
    }
    let mut uniq: Vec<f64> = scores.to_vec();
    uniq.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    uniq.dedup();
    let mut candidates = Vec::with_capacity(2 * uniq.len());
    for (k, &v) in uniq.iter().enumerate() {
        candidates.push(v);
        if k + 1 < uniq.len() {
            candidates.push((v + uniq[k + 1]) / 2.0);
        }
    }
    candidates.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());

    let mut best_tau = candidates[0];
    let mut best_j = f64::NEG_INFINITY;
    for &tau in &candidates {
        let mut tp = 0usize;
        let mut tn = 0usize;
        for (s, &t) in scores.iter().zip(truth) {
            let pred = *s >= tau;
            if pred && t {
                tp += 1;
            } else if !pred && !t {
                tn += 1;
            }
        }
        let j = tp as f64 / positives as f64 + tn as f64 / negatives as f64 - 1.0;
        if j > best_j {
            best_j = j;
            best_tau = tau;
        }
    }
    Ok(best_tau)
}

/// Base estimator used inside RANSAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RansacBase {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RansacConfig {
    /// Number of random subsets (paper default 500).
    pub n_subsets: usize,
    /// Fraction of the measurements per subset (paper default 0.9).
    pub subset_fraction: f64,
    pub base: RansacBase,
}

impl RansacConfig {
    pub fn new(base: RansacBase) -> Self {
        RansacConfig {
            n_subsets: 500,
            subset_fraction: 0.9,
            base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subsets == 0 {
            return Err(DrltError::param("n_subsets must be >= 1"));
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return Err(DrltError::param("subset_fraction must lie in (0,1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RansacOutcome {
    pub beta_hat: Vec<f64>,
    /// Measurements that voted for the winning model.
    pub consensus: Vec<usize>,
    pub winner: usize,
    pub votes: Vec<usize>,
    pub subset_size: usize,
}

impl RansacOutcome {
    pub fn beta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta_hat)
    }
}

fn base_fit(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    base: RansacBase,
    lambda: f64,
    warm: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    match base {
        RansacBase::L2 => {
            let opts = LassoOptions {
                warm_beta: warm.cloned(),
                max_sweeps: 2_000,
                ..Default::default()
            };
            Ok(lasso_l2_with(y, a, lambda, &opts)?.beta())
        }
        RansacBase::L1 => {
            let opts = L1Options {
                warm_beta: warm.cloned(),
                // warm-started subset fits need only the small-smoothing tail
                mu_start_rel: if warm.is_some() { 1e-3 } else { 1e-1 },
                mu_end_rel: 1e-6,
                stage_iters: 600,
                ..Default::default()
            };
            Ok(lasso_l1_with(y, a, lambda, &opts)?.beta())
        }
    }
}

/// RANSAC consensus fit: draws `n_subsets` random subsets of
/// `round(subset_fraction * n)` measurements, fits the base estimator on
/// each, lets every measurement vote for the model with the smallest
/// absolute residual (ties to the lowest model index), and refits the base
/// estimator on the winning model's voters.
pub fn ransac_fit(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    cfg: &RansacConfig,
    lambda: f64,
    seed: u64,
) -> Result<RansacOutcome> {
    cfg.validate()?;
    let n = a.nrows();
    let p = a.ncols();
    if y.len() != n {
        return Err(DrltError::dims("ransac: y length != rows of A"));
    }
    let m = ((cfg.subset_fraction * n as f64).round() as usize).clamp(1, n);

    // full-data fit warm-starts every subset fit
    let warm = base_fit(y, a, cfg.base, lambda, None)?;

    let mut rng = rng_for(seed, STREAM_RANSAC);
    let subsets: Vec<Vec<usize>> = (0..cfg.n_subsets)
        .map(|_| rand::seq::index::sample(&mut rng, n, m).into_vec())
        .collect();

    let models: Vec<DVector<f64>> = subsets
        .par_iter()
        .map(|rows| {
            let mut a_sub = DMatrix::zeros(rows.len(), p);
            let mut y_sub = DVector::zeros(rows.len());
            for (r, &i) in rows.iter().enumerate() {
                a_sub.row_mut(r).copy_from(&a.row(i));
                y_sub[r] = y[i];
            }
            base_fit(&y_sub, &a_sub, cfg.base, lambda, Some(&warm))
        })
        .collect::<Result<Vec<_>>>()?;

    // residual matrix: predictions of every model at every measurement
    let mut votes = vec![0usize; cfg.n_subsets];
    let mut voter_of = vec![0usize; n];
    let predictions: Vec<DVector<f64>> = models.iter().map(|b| a * b).collect();
    for l in 0..n {
        let mut best_j = 0usize;
        let mut best_r = f64::INFINITY;
        // residuals within a hair of the minimum count as ties and keep the
        // lowest model index, so identical models vote identically
        let tie = 1e-7 * y[l].abs().max(1.0);
        for (j, pred) in predictions.iter().enumerate() {
            let r = (y[l] - pred[l]).abs();
            if r < best_r - tie {
                best_r = r;
                best_j = j;
            }
        }
        voter_of[l] = best_j;
        votes[best_j] += 1;
    }
    let winner = votes
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.cmp(b).then(j.cmp(i)))
        .map(|(j, _)| j)
        .unwrap_or(0);
    let consensus: Vec<usize> = (0..n).filter(|&l| voter_of[l] == winner).collect();

    let mut a_con = DMatrix::zeros(consensus.len(), p);
    let mut y_con = DVector::zeros(consensus.len());
    for (r, &i) in consensus.iter().enumerate() {
        a_con.row_mut(r).copy_from(&a.row(i));
        y_con[r] = y[i];
    }
    let beta = base_fit(&y_con, &a_con, cfg.base, lambda, Some(&warm))?;
    Ok(RansacOutcome {
        beta_hat: beta.as_slice().to_vec(),
        consensus,
        winner,
        votes,
        subset_size: m,
    })
}
