//! Hypothesis tests for defective samples and erroneous pools, plus the
//! statistical utilities they need.
//!
//! The DRLT tests use `W = A`: reject `beta*_j = 0` when
//! `sqrt(n) |b_Wj| / sigma > z_{alpha/2}` and reject `delta*_i = 0` when
//! `|d_Wi| / (sigma sqrt(Sigma_A_ii)) > z_{alpha/2}`. The ODRLT tests use
//! the designed weights and standardise by the `Sigma_beta` / `Sigma_delta`
//! diagonals instead. All tests are two-sided.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::debias::build_m_with;
use crate::solvers::{lasso_l2_with, BoxQpOptions, LassoFit, LassoOptions};
use crate::{DrltError, Result};

/// Standard normal CDF via the Zelen-Severo polynomial (A&S 26.2.17);
/// absolute error below 7.5e-8.
pub fn normal_cdf(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - normal_cdf(-x);
    }
    let t = 1.0 / (1.0 + 0.231_641_9 * x);
    let poly = t
        * (0.319_381_530
            + t * (-0.356_563_782 + t * (1.781_477_937 + t * (-1.821_255_978 + t * 1.330_274_429))));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    1.0 - pdf * poly
}

/// Inverse standard normal CDF (Acklam's rational approximation; absolute
/// error below 1.2e-9).
pub fn normal_quantile(q: f64) -> f64 {
    if q <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if q >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_690e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const Q_LOW: f64 = 0.02425;

    if q < Q_LOW {
        let u = (-2.0 * q.ln()).sqrt();
        (((((C[0] * u + C[1]) * u + C[2]) * u + C[3]) * u + C[4]) * u + C[5])
            / ((((D[0] * u + D[1]) * u + D[2]) * u + D[3]) * u + 1.0)
    } else if q <= 1.0 - Q_LOW {
        let u = q - 0.5;
        let r = u * u;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * u
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let u = (-2.0 * (1.0 - q).ln()).sqrt();
        -(((((C[0] * u + C[1]) * u + C[2]) * u + C[3]) * u + C[4]) * u + C[5])
            / ((((D[0] * u + D[1]) * u + D[2]) * u + D[3]) * u + 1.0)
    }
}

/// Upper `alpha/2` quantile of the standard normal, `Phi^{-1}(1 - alpha/2)`.
pub fn z_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DrltError::param(format!(
            "significance level must lie in (0,1), got {alpha}"
        )));
    }
    Ok(normal_quantile(1.0 - alpha / 2.0))
}

/// Outcome of the Lilliefors normality test.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LillieforsOutcome {
    /// Kolmogorov-Smirnov distance against the normal with estimated
    /// mean and variance.
    pub statistic: f64,
    /// Approximate p-value (Dallal-Wilkinson upper tail, Stephens
    /// polynomial elsewhere; constants below).
    pub p_value: f64,
    pub reject: bool,
}

/// Lilliefors test for normality with estimated mean and variance.
///
/// The null is rejected at level `alpha` when the approximate p-value
/// falls below `alpha`. The p-value uses the Dallal-Wilkinson analytic fit
/// to the critical-value table (reliable in the upper tail where gating
/// happens) and the Stephens modified-statistic polynomials when the fit
/// reports more than 0.1.
pub fn lilliefors_test(samples: &[f64], alpha: f64) -> Result<LillieforsOutcome> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DrltError::param("alpha must lie in (0,1)"));
    }
    let n = samples.len();
    if n < 5 {
        return Err(DrltError::param(format!(
            "lilliefors test needs at least 5 samples, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
    if var <= 0.0 || !var.is_finite() {
        return Err(DrltError::Degenerate("zero-variance sample".into()));
    }
    let sd = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());

    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal_cdf((x - mean) / sd);
        let d_plus = (i + 1) as f64 / nf - f;
        let d_minus = f - i as f64 / nf;
        d = d.max(d_plus).max(d_minus);
    }

    let (kd, nd) = if n <= 100 {
        (d, nf)
    } else {
        (d * (nf / 100.0).powf(0.49), 100.0)
    };
    let mut p = (-7.012_56 * kd * kd * (nd + 2.780_19)
        + 2.995_87 * kd * (nd + 2.780_19).sqrt()
        - 0.122_119
        + 0.974_598 / nd.sqrt()
        + 1.679_97 / nd)
        .exp();
    if p > 0.1 {
        let kk = (nf.sqrt() - 0.01 + 0.85 / nf.sqrt()) * d;
        p = if kk <= 0.302 {
            1.0
        } else if kk <= 0.5 {
            2.767_73 - 19.828_315 * kk + 80.709_644 * kk * kk - 138.551_52 * kk.powi(3)
                + 81.218_052 * kk.powi(4)
        } else if kk <= 0.9 {
            -4.901_232 + 40.662_806 * kk - 97.490_286 * kk * kk + 94.029_866 * kk.powi(3)
                - 32.355_711 * kk.powi(4)
        } else if kk <= 1.31 {
            6.198_765 - 19.558_097 * kk + 23.186_922 * kk * kk - 12.234_627 * kk.powi(3)
                + 2.423_045 * kk.powi(4)
        } else {
            0.0
        };
    }
    let p = p.clamp(0.0, 1.0);
    Ok(LillieforsOutcome {
        statistic: d,
        p_value: p,
        reject: p < alpha,
    })
}

/// Which test produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    DrltBeta,
    DrltDelta,
    OdrltBeta,
    OdrltDelta,
    Baseline1,
    Baseline2,
    Baseline3,
}

/// Per-coordinate statistics and binary decisions of one test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub test_kind: TestKind,
    pub alpha: f64,
    /// `z_{alpha/2}` rejection threshold.
    pub threshold: f64,
    pub statistics: Vec<f64>,
    /// `decisions[k] = |statistics[k]| > threshold`.
    pub decisions: Vec<bool>,
}

impl TestReport {
    pub fn from_statistics(kind: TestKind, alpha: f64, statistics: Vec<f64>) -> Result<Self> {
        let threshold = z_quantile(alpha)?;
        let decisions = statistics.iter().map(|s| s.abs() > threshold).collect();
        Ok(TestReport {
            test_kind: kind,
            alpha,
            threshold,
            statistics,
            decisions,
        })
    }

    /// Writes `coordinate,statistic,decision` lines with a header row.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(b"coordinate,statistic,decision\n")?;
        for (k, (s, d)) in self.statistics.iter().zip(&self.decisions).enumerate() {
            out.write_all(format!("{k},{s},{}\n", u8::from(*d)).as_bytes())?;
        }
        Ok(())
    }

    pub fn rejected_indices(&self) -> Vec<usize> {
        self.decisions
            .iter()
            .enumerate()
            .filter(|(_, &d)| d)
            .map(|(k, _)| k)
            .collect()
    }
}

/// DRLT test for the signal: statistic `sqrt(n) |b_Wj| / sigma`.
pub fn drlt_beta_test(
    beta_w: &DVector<f64>,
    sigma: f64,
    n: usize,
    alpha: f64,
) -> Result<TestReport> {
    if sigma <= 0.0 {
        return Err(DrltError::Degenerate(
            "drlt beta test needs sigma > 0".into(),
        ));
    }
    let root_n = (n as f64).sqrt();
    let stats = beta_w.iter().map(|b| root_n * b / sigma).collect();
    TestReport::from_statistics(TestKind::DrltBeta, alpha, stats)
}

/// DRLT test for the MMEs: statistic `d_Wi / (sigma sqrt(Sigma_A_ii))`.
pub fn drlt_delta_test(
    delta_w: &DVector<f64>,
    sigma_a: &[f64],
    sigma: f64,
    alpha: f64,
) -> Result<TestReport> {
    if sigma <= 0.0 {
        return Err(DrltError::Degenerate(
            "drlt delta test needs sigma > 0".into(),
        ));
    }
    if delta_w.len() != sigma_a.len() {
        return Err(DrltError::dims("delta_w and Sigma_A lengths differ"));
    }
    let stats = delta_w
        .iter()
        .zip(sigma_a)
        .map(|(d, &v)| {
            if v <= 0.0 {
                return Err(DrltError::Degenerate(
                    "Sigma_A diagonal entry is not positive".into(),
                ));
            }
            Ok(d / (sigma * v.sqrt()))
        })
        .collect::<Result<Vec<f64>>>()?;
    TestReport::from_statistics(TestKind::DrltDelta, alpha, stats)
}

/// ODRLT test for the signal: statistic `sqrt(n) b_Wj / sqrt(Sigma_beta_jj)`.
pub fn odrlt_beta_test(
    beta_w: &DVector<f64>,
    sigma_beta: &[f64],
    n: usize,
    alpha: f64,
) -> Result<TestReport> {
    if beta_w.len() != sigma_beta.len() {
        return Err(DrltError::dims("beta_w and Sigma_beta lengths differ"));
    }
    let root_n = (n as f64).sqrt();
    let stats = beta_w
        .iter()
        .zip(sigma_beta)
        .map(|(b, &v)| {
            if v <= 0.0 {
                return Err(DrltError::Degenerate(
                    "Sigma_beta diagonal entry is not positive".into(),
                ));
            }
            Ok(root_n * b / v.sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    TestReport::from_statistics(TestKind::OdrltBeta, alpha, stats)
}

/// ODRLT test for the MMEs: statistic `d_Wi / sqrt(Sigma_delta_ii)`.
pub fn odrlt_delta_test(
    delta_w: &DVector<f64>,
    sigma_delta: &[f64],
    alpha: f64,
) -> Result<TestReport> {
    if delta_w.len() != sigma_delta.len() {
        return Err(DrltError::dims("delta_w and Sigma_delta lengths differ"));
    }
    let stats = delta_w
        .iter()
        .zip(sigma_delta)
        .map(|(d, &v)| {
            if v <= 0.0 {
                return Err(DrltError::Degenerate(
                    "Sigma_delta diagonal entry is not positive".into(),
                ));
            }
            Ok(d / v.sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    TestReport::from_statistics(TestKind::OdrltDelta, alpha, stats)
}

/// Debiased-Lasso test machinery shared by Baseline-1 and Baseline-3: the
/// approximate inverse of `A'A/n` and the variance diagonal
/// `[M Sigma M']_jj`, both reusable across noise runs.
#[derive(Debug, Clone)]
pub struct GramDebiasPipeline {
    pub m: DMatrix<f64>,
    pub var_diag: Vec<f64>,
    pub mu: f64,
    pub m_feasible: bool,
}

impl GramDebiasPipeline {
    /// Builds the pipeline with `mu = 2 sqrt(log p / n)` unless overridden.
    pub fn build(a: &DMatrix<f64>, mu_override: Option<f64>) -> Result<Self> {
        let n = a.nrows() as f64;
        let p = a.ncols() as f64;
        let mu = mu_override.unwrap_or_else(|| 2.0 * (p.ln() / n).sqrt());
        let inv = build_m_with(a, mu, &BoxQpOptions::default())?;
        let sigma_hat = a.transpose() * a / n;
        let msm = &inv.m * &sigma_hat * inv.m.transpose();
        let var_diag = (0..msm.nrows()).map(|j| msm[(j, j)]).collect();
        Ok(GramDebiasPipeline {
            m: inv.m,
            var_diag,
            mu,
            m_feasible: inv.feasible,
        })
    }

    /// Lasso on `(y, A)`, debias through `M A' / n`, and test every
    /// coordinate with statistic
    /// `sqrt(n) b_dj / sqrt(sigma^2 [M Sigma M']_jj)`.
    pub fn run_test(
        &self,
        y: &DVector<f64>,
        a: &DMatrix<f64>,
        lambda: f64,
        sigma: f64,
        alpha: f64,
        kind: TestKind,
        lasso_opts: &LassoOptions,
    ) -> Result<(TestReport, LassoFit, DVector<f64>)> {
        if sigma <= 0.0 {
            return Err(DrltError::Degenerate("baseline test needs sigma > 0".into()));
        }
        let n = a.nrows() as f64;
        let fit = lasso_l2_with(y, a, lambda, lasso_opts)?;
        let beta = fit.beta();
        let residual = y - a * &beta;
        let debiased = &beta + &self.m * (a.transpose() * residual) / n;
        let root_n = n.sqrt();
        let stats = debiased
            .iter()
            .zip(&self.var_diag)
            .map(|(b, &v)| {
                if v <= 0.0 {
                    return Err(DrltError::Degenerate(
                        "baseline variance entry is not positive".into(),
                    ));
                }
                Ok(root_n * b / (sigma * v.sqrt()))
            })
            .collect::<Result<Vec<f64>>>()?;
        let report = TestReport::from_statistics(kind, alpha, stats)?;
        Ok((report, fit, debiased))
    }
}

/// Baseline-2 machinery: debiased Lasso on the augmented design `(A | I_n)`
/// treating `x = (beta', delta')'`; tests the first `p` coordinates.
#[derive(Debug, Clone)]
pub struct AugmentedDebiasPipeline {
    pub aug: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub var_diag: Vec<f64>,
    pub mu: f64,
    pub m_feasible: bool,
}

impl AugmentedDebiasPipeline {
    /// Builds `(A | I_n)` and its approximate inverse with
    /// `mu = 2 sqrt(log(n+p) / n)` unless overridden.
    pub fn build(a: &DMatrix<f64>, mu_override: Option<f64>) -> Result<Self> {
        let n = a.nrows();
        let p = a.ncols();
        let nf = n as f64;
        let mut aug = DMatrix::zeros(n, p + n);
        aug.view_mut((0, 0), (n, p)).copy_from(a);
        aug.view_mut((0, p), (n, n))
            .copy_from(&DMatrix::identity(n, n));
        let mu = mu_override.unwrap_or_else(|| 2.0 * (((n + p) as f64).ln() / nf).sqrt());
        let inv = build_m_with(&aug, mu, &BoxQpOptions::default())?;
        let sigma_hat = aug.transpose() * &aug / nf;
        let msm = &inv.m * &sigma_hat * inv.m.transpose();
        let var_diag = (0..p).map(|j| msm[(j, j)]).collect();
        Ok(AugmentedDebiasPipeline {
            aug,
            m: inv.m,
            var_diag,
            mu,
            m_feasible: inv.feasible,
        })
    }

    pub fn run_test(
        &self,
        y: &DVector<f64>,
        lambda: f64,
        sigma: f64,
        alpha: f64,
        lasso_opts: &LassoOptions,
    ) -> Result<(TestReport, LassoFit)> {
        if sigma <= 0.0 {
            return Err(DrltError::Degenerate("baseline test needs sigma > 0".into()));
        }
        let n = self.aug.nrows() as f64;
        let p = self.var_diag.len();
        let fit = lasso_l2_with(y, &self.aug, lambda, lasso_opts)?;
        let x = fit.beta();
        let residual = y - &self.aug * &x;
        let debiased = &x + &self.m * (self.aug.transpose() * residual) / n;
        let root_n = n.sqrt();
        let stats = (0..p)
            .map(|j| {
                let v = self.var_diag[j];
                if v <= 0.0 {
                    return Err(DrltError::Degenerate(
                        "baseline variance entry is not positive".into(),
                    ));
                }
                Ok(root_n * debiased[j] / (sigma * v.sqrt()))
            })
            .collect::<Result<Vec<f64>>>()?;
        let report = TestReport::from_statistics(TestKind::Baseline2, alpha, stats)?;
        Ok((report, fit))
    }
}

/// One-shot Baseline-1 test (builds the machinery internally).
pub fn baseline1_test(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    lambda: f64,
    sigma: f64,
    alpha: f64,
) -> Result<TestReport> {
    let pipeline = GramDebiasPipeline::build(a, None)?;
    let (report, _, _) = pipeline.run_test(
        y,
        a,
        lambda,
        sigma,
        alpha,
        TestKind::Baseline1,
        &LassoOptions::default(),
    )?;
    Ok(report)
}

/// One-shot Baseline-2 test.
pub fn baseline2_test(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    lambda: f64,
    sigma: f64,
    alpha: f64,
) -> Result<TestReport> {
    let pipeline = AugmentedDebiasPipeline::build(a, None)?;
    let (report, _) = pipeline.run_test(y, lambda, sigma, alpha, &LassoOptions::default())?;
    Ok(report)
}

/// One-shot Baseline-3 test: the Baseline-1 pipeline applied to
/// measurements generated with the correct pooling matrix (`delta* = 0`).
pub fn baseline3_test(
    y_clean: &DVector<f64>,
    a: &DMatrix<f64>,
    lambda: f64,
    sigma: f64,
    alpha: f64,
) -> Result<TestReport> {
    let pipeline = GramDebiasPipeline::build(a, None)?;
    let (report, _, _) = pipeline.run_test(
        y_clean,
        a,
        lambda,
        sigma,
        alpha,
        TestKind::Baseline3,
        &LassoOptions::default(),
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_noise, gen_pooling, rng_for, STREAM_MATRIX, STREAM_NOISE_BASE};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn quantile_reference_values() {
        // frozen high-precision references for Phi^{-1}
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-8);
        assert!((normal_quantile(0.995) - 2.575_829_303_548_901).abs() < 1e-8);
        assert!((normal_quantile(0.9995) - 3.290_526_731_491_926).abs() < 1e-8);
        assert!((normal_quantile(0.5) - 0.0).abs() < 1e-12);
        assert!((normal_quantile(0.025) + 1.959_963_984_540_054).abs() < 1e-8);
    }

    #[test]
    fn z_quantile_examples() {
        // alpha = 0.3173 -> about 1.0
        assert!((z_quantile(0.3173).unwrap() - 1.0).abs() < 1e-3);
        // alpha = 0.01 -> about 2.5758
        assert!((z_quantile(0.01).unwrap() - 2.575_829_3).abs() < 1e-6);
        // alpha -> 1 gives the median
        assert!(z_quantile(0.9999).unwrap().abs() < 1e-3);
        assert!(z_quantile(0.0).is_err());
        assert!(z_quantile(1.0).is_err());
    }

    #[test]
    fn cdf_quantile_round_trip() {
        for &q in &[0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            let x = normal_quantile(q);
            assert!((normal_cdf(x) - q).abs() < 1e-7, "round trip at {q}");
        }
    }

    #[test]
    fn lilliefors_calibration_on_normal_data() {
        // pass rate approaches 1 - alpha for genuinely normal samples
        let alpha = 0.05;
        let mut rejections = 0;
        let reps = 400;
        let mut rng = rng_for(123, 7777);
        for _ in 0..reps {
            let sample: Vec<f64> = (0..200)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    3.0 + 2.0 * z
                })
                .collect();
            if lilliefors_test(&sample, alpha).unwrap().reject {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / reps as f64;
        // binomial 3-sigma band around alpha
        let se = (alpha * (1.0 - alpha) / reps as f64).sqrt();
        assert!(
            (rate - alpha).abs() < 3.0 * se + 0.01,
            "rejection rate {rate} not near {alpha}"
        );
    }

    #[test]
    fn lilliefors_power_against_uniform() {
        let mut rng = rng_for(5, 8888);
        let mut rejections = 0;
        let reps = 100;
        for _ in 0..reps {
            let sample: Vec<f64> = (0..1000).map(|_| rng.gen_range(0.0..1.0)).collect();
            if lilliefors_test(&sample, 0.01).unwrap().reject {
                rejections += 1;
            }
        }
        assert!(rejections >= 99, "rejected only {rejections}/{reps}");
    }

    #[test]
    fn lilliefors_degenerate_and_small_inputs() {
        assert!(lilliefors_test(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0], 0.05).is_err());
        assert!(lilliefors_test(&[1.0, 2.0, 3.0], 0.05).is_err());
    }

    #[test]
    fn drlt_beta_no_rejections_at_zero() {
        let beta_w = DVector::zeros(10);
        let report = drlt_beta_test(&beta_w, 1.0, 100, 0.01).unwrap();
        assert!(report.decisions.iter().all(|&d| !d));
        assert!(drlt_beta_test(&beta_w, 0.0, 100, 0.01).is_err());
    }

    #[test]
    fn drlt_beta_strong_signal_rejected() {
        // statistic 10 > 2.5758
        let sigma = 2.0;
        let n = 400usize;
        let mut beta_w = DVector::zeros(4);
        beta_w[2] = 10.0 * sigma / (n as f64).sqrt();
        let report = drlt_beta_test(&beta_w, sigma, n, 0.01).unwrap();
        assert!(report.decisions[2]);
        assert!((report.statistics[2] - 10.0).abs() < 1e-12);
        assert!(!report.decisions[0]);
    }

    #[test]
    fn drlt_delta_boundary_not_rejected() {
        // statistic exactly at the threshold: strict inequality keeps the null
        let alpha = 0.05;
        let threshold = z_quantile(alpha).unwrap();
        let sigma_a = vec![4.0];
        let sigma = 1.5;
        let delta_w = DVector::from_column_slice(&[threshold * sigma * 2.0]);
        let report = drlt_delta_test(&delta_w, &sigma_a, sigma, alpha).unwrap();
        assert!((report.statistics[0] - threshold).abs() < 1e-12);
        assert!(!report.decisions[0]);
    }

    #[test]
    fn odrlt_reduces_to_drlt_with_w_equals_a() {
        let (_, a) = gen_pooling(20, 30, &mut rng_for(3, STREAM_MATRIX));
        let a = a.to_dmatrix();
        let sigma = 1.3;
        let mut rng = rng_for(3, 4444);
        let beta_w = DVector::from_fn(30, |_, _| rng.gen_range(-0.5..0.5));
        // W = A: Sigma_beta_jj = sigma^2 exactly
        let sb = crate::debias::sigma_beta_diag(&a, sigma);
        let odrlt = odrlt_beta_test(&beta_w, &sb, 20, 0.05).unwrap();
        let drlt = drlt_beta_test(&beta_w, sigma, 20, 0.05).unwrap();
        for j in 0..30 {
            assert!(
                (odrlt.statistics[j] - drlt.statistics[j]).abs() < 1e-10,
                "statistic {j} differs"
            );
            assert_eq!(odrlt.decisions[j], drlt.decisions[j]);
        }
    }

    #[test]
    fn decisions_recomputable_from_statistics() {
        let stats = vec![0.5, -3.0, 2.0, -1.0];
        let report = TestReport::from_statistics(TestKind::OdrltDelta, 0.05, stats).unwrap();
        for (k, &s) in report.statistics.iter().enumerate() {
            assert_eq!(report.decisions[k], s.abs() > report.threshold);
        }
    }

    #[test]
    fn report_csv_format() {
        let report =
            TestReport::from_statistics(TestKind::DrltBeta, 0.05, vec![0.25, -4.0]).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("coordinate,statistic,decision\n"));
        assert!(text.contains("0,0.25,0\n"));
        assert!(text.contains("1,-4,1\n"));
    }

    #[test]
    fn null_size_calibration_drlt_beta() {
        // beta* = 0, delta* = 0: with W = A and zeroed fits, the statistic is
        // a_j'eta / (sqrt(n) sigma), exactly standard normal per draw.
        let n = 60usize;
        let p = 80usize;
        let (_, a) = gen_pooling(n, p, &mut rng_for(9, STREAM_MATRIX));
        let a = a.to_dmatrix();
        let sigma = 2.0;
        let alpha = 0.05;
        let runs = 400usize;
        let (l1, l2) = crate::solvers::default_lambdas(sigma, n, p).unwrap();
        let mut rejections = 0usize;
        let mut total = 0usize;
        for run in 0..runs {
            let eta = gen_noise(n, sigma, &mut rng_for(700 + run as u64, STREAM_NOISE_BASE));
            let y = DVector::from_column_slice(&eta);
            let fit = crate::solvers::robust_lasso(&y, &a, l1, l2).unwrap();
            let bw = crate::debias::debias_beta(&fit, &a, &y, &a).unwrap();
            let report = drlt_beta_test(&bw, sigma, n, alpha).unwrap();
            rejections += report.decisions.iter().filter(|&&d| d).count();
            total += p;
        }
        let rate = rejections as f64 / total as f64;
        // pooled binomial band (coordinates within a run are dependent, so
        // allow a generous multiple)
        assert!(
            (rate - alpha).abs() < 0.02,
            "null rejection rate {rate} vs alpha {alpha}"
        );
    }

    #[test]
    fn baseline_pipelines_smoke() {
        let n = 30usize;
        let p = 40usize;
        let (_, a) = gen_pooling(n, p, &mut rng_for(21, STREAM_MATRIX));
        let a = a.to_dmatrix();
        let mut beta = DVector::zeros(p);
        beta[5] = 100.0;
        let sigma = 1.0;
        let eta = gen_noise(n, sigma, &mut rng_for(21, STREAM_NOISE_BASE));
        let y = &a * &beta + DVector::from_column_slice(&eta);

        let r1 = baseline1_test(&y, &a, 0.5, sigma, 0.01).unwrap();
        assert_eq!(r1.statistics.len(), p);
        assert!(r1.decisions[5], "baseline-1 must flag the strong signal");

        let r2 = baseline2_test(&y, &a, 0.5, sigma, 0.01).unwrap();
        assert_eq!(r2.statistics.len(), p);
        assert!(r2.decisions[5], "baseline-2 must flag the strong signal");

        let r3 = baseline3_test(&y, &a, 0.5, sigma, 0.01).unwrap();
        assert_eq!(r3.test_kind, TestKind::Baseline3);
    }

    #[test]
    fn baseline2_augmented_gram_structure() {
        let n = 10usize;
        let p = 15usize;
        let (_, a) = gen_pooling(n, p, &mut rng_for(31, STREAM_MATRIX));
        let a = a.to_dmatrix();
        let pipe = AugmentedDebiasPipeline::build(&a, None).unwrap();
        let gram = pipe.aug.transpose() * &pipe.aug / n as f64;
        // A-block diagonal is 1; identity-block diagonal is 1/n
        for j in 0..p {
            assert!((gram[(j, j)] - 1.0).abs() < 1e-12);
        }
        for i in 0..n {
            assert!((gram[(p + i, p + i)] - 1.0 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn baseline1_fallback_m_identity_statistic() {
        // M = I: variance diag becomes Sigma_jj = 1, statistic sqrt(n) b / sigma
        let n = 8usize;
        let p = 12usize;
        let (_, a) = gen_pooling(n, p, &mut rng_for(41, STREAM_MATRIX));
        let a = a.to_dmatrix();
        let sigma_hat = a.transpose() * &a / n as f64;
        let m = DMatrix::<f64>::identity(p, p);
        let msm = &m * &sigma_hat * m.transpose();
        for j in 0..p {
            assert!((msm[(j, j)] - 1.0).abs() < 1e-12);
        }
    }
}
