//! Command-line Monte Carlo harness: instance generation, single fits,
//! hypothesis tests, and the full experiment suites.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use drlt::datagen::{gen_instance, GenParams};
use drlt::debias::{
    debias_beta, debias_delta, default_mus, design_w, sigma_a_diag, sigma_beta_diag,
    sigma_delta_diag, DebiasWeights, WeightsSource,
};
use drlt::harness::{run_experiment, write_outputs, ExperimentConfig, ExperimentId};
use drlt::hypotest::{drlt_beta_test, drlt_delta_test, odrlt_beta_test, odrlt_delta_test};
use drlt::linmodel::ProblemInstance;
use drlt::mat::write_vec_csv;
use drlt::solvers::{default_lambdas, robust_lasso};

#[derive(Parser)]
#[command(
    name = "drlt",
    version,
    about = "Debiased robust Lasso tests for group testing with pooling-matrix errors"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic problem instance (JSON bundle + CSV matrices).
    Gen {
        /// GenParams JSON: {"p","n","f_sp","f_adv","f_sigma","seed"}.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the joint robust Lasso on an instance.
    Fit {
        /// JSON: {"gen": GenParams} or {"instance": "path"}, optional
        /// "lambda1"/"lambda2" (default: theorem formulas).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the DRLT and ODRLT tests on an instance.
    Test {
        /// Same schema as `fit`, plus optional "alpha" (default 0.01).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sensitivity/specificity of Baseline-1/2 and ODRLT over an n sweep.
    Table1(ExpArgs),
    /// MME identification suite (DRLT / ODRLT / robust Lasso).
    SuiteDelta(ExpArgs),
    /// Defective-sample identification suite (+ Baseline-3).
    SuiteBeta(ExpArgs),
    /// RRMSE suite over the seven estimators.
    SuiteRrmse(ExpArgs),
    /// Export QQ pairs of the centred standardised statistics.
    Qq(ExpArgs),
}

#[derive(Args)]
struct ExpArgs {
    /// ExperimentConfig JSON; omit for suite defaults (desk-scale runs=20).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Run the paper-scale 100 Monte Carlo runs.
    #[arg(long)]
    full: bool,
    /// Explicit run count (overrides --full).
    #[arg(long)]
    runs: Option<usize>,
}

/// Errors that should exit with code 2.
struct ConfigError(anyhow::Error);

fn read_config(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(ConfigError)
}

fn experiment_config(
    id: ExperimentId,
    args: &ExpArgs,
) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = read_config(path)?;
            let cfg = ExperimentConfig::from_json(&text)
                .map_err(|e| ConfigError(anyhow::anyhow!("parsing config: {e}")))?;
            if cfg.experiment_id != id {
                return Err(ConfigError(anyhow::anyhow!(
                    "config declares experiment {:?}, subcommand expects {:?}",
                    cfg.experiment_id,
                    id
                )));
            }
            cfg
        }
        None => {
            let mut c = ExperimentConfig::new(id, 1);
            c.runs = 20; // desk-scale default
            c
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.full {
        cfg.runs = 100;
    }
    if let Some(runs) = args.runs {
        cfg.runs = runs;
    }
    cfg.validate()
        .map_err(|e| ConfigError(anyhow::anyhow!("invalid config: {e}")))?;
    Ok(cfg)
}

#[derive(serde::Deserialize)]
struct FitConfig {
    #[serde(default)]
    gen: Option<GenParams>,
    #[serde(default)]
    instance: Option<PathBuf>,
    #[serde(default)]
    lambda1: Option<f64>,
    #[serde(default)]
    lambda2: Option<f64>,
    #[serde(default)]
    alpha: Option<f64>,
}

fn load_instance(cfg: &FitConfig, seed: Option<u64>) -> anyhow::Result<ProblemInstance> {
    match (&cfg.gen, &cfg.instance) {
        (Some(g), None) => {
            let mut g = *g;
            if let Some(s) = seed {
                g.seed = s;
            }
            Ok(gen_instance(&g)?)
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading instance {}", path.display()))?;
            Ok(ProblemInstance::from_json(&text)?)
        }
        _ => anyhow::bail!("config must provide exactly one of \"gen\" or \"instance\""),
    }
}

fn cmd_gen(config: &Path, out: &Path, seed: Option<u64>) -> Result<anyhow::Result<()>, ConfigError> {
    let text = read_config(config)?;
    let mut params: GenParams = serde_json::from_str(&text)
        .map_err(|e| ConfigError(anyhow::anyhow!("parsing GenParams: {e}")))?;
    if let Some(s) = seed {
        params.seed = s;
    }
    params
        .validate()
        .map_err(|e| ConfigError(anyhow::anyhow!("invalid parameters: {e}")))?;
    Ok((|| {
        let inst = gen_instance(&params)?;
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("instance.json"), inst.to_json()?)?;
        let mut f = std::fs::File::create(out.join("A.csv"))?;
        inst.a.entries().write_csv(&mut f)?;
        let mut f = std::fs::File::create(out.join("A_hat.csv"))?;
        inst.a_hat.entries().write_csv(&mut f)?;
        let mut f = std::fs::File::create(out.join("beta_star.csv"))?;
        write_vec_csv(inst.beta_star.values(), &mut f)?;
        let mut f = std::fs::File::create(out.join("delta_star.csv"))?;
        write_vec_csv(inst.delta_star.values(), &mut f)?;
        let mut f = std::fs::File::create(out.join("y.csv"))?;
        write_vec_csv(inst.y.values(), &mut f)?;
        println!(
            "instance written to {} (n={}, p={}, s={}, r={}, sigma={})",
            out.display(),
            inst.pools(),
            inst.samples(),
            inst.beta_star.sparsity(),
            inst.delta_star.sparsity(),
            inst.sigma
        );
        Ok(())
    })())
}

fn cmd_fit(config: &Path, out: &Path, seed: Option<u64>) -> Result<anyhow::Result<()>, ConfigError> {
    let text = read_config(config)?;
    let cfg: FitConfig = serde_json::from_str(&text)
        .map_err(|e| ConfigError(anyhow::anyhow!("parsing fit config: {e}")))?;
    Ok((|| {
        let inst = load_instance(&cfg, seed)?;
        let a = inst.a.to_dmatrix();
        let y = inst.y.to_dvector();
        let (l1_default, l2_default) =
            default_lambdas(inst.sigma.max(1e-12), inst.pools(), inst.samples())?;
        let l1 = cfg.lambda1.unwrap_or(l1_default);
        let l2 = cfg.lambda2.unwrap_or(l2_default);
        let fit = robust_lasso(&y, &a, l1, l2)?;
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("fit.json"), serde_json::to_string_pretty(&fit)?)?;
        println!(
            "fit written to {} (objective {:.6e}, kkt {:.2e}, {} sweeps, converged: {})",
            out.display(),
            fit.objective,
            fit.kkt_residual,
            fit.iterations,
            fit.converged
        );
        Ok(())
    })())
}

fn cmd_test(config: &Path, out: &Path, seed: Option<u64>) -> Result<anyhow::Result<()>, ConfigError> {
    let text = read_config(config)?;
    let cfg: FitConfig = serde_json::from_str(&text)
        .map_err(|e| ConfigError(anyhow::anyhow!("parsing test config: {e}")))?;
    Ok((|| {
        let inst = load_instance(&cfg, seed)?;
        let alpha = cfg.alpha.unwrap_or(0.01);
        let a = inst.a.to_dmatrix();
        let y = inst.y.to_dvector();
        let (n, p) = (inst.pools(), inst.samples());
        let sigma = inst.sigma;
        if sigma <= 0.0 {
            anyhow::bail!("tests need a positive noise level; the instance has sigma = 0");
        }
        let (l1_default, l2_default) = default_lambdas(sigma, n, p)?;
        let l1 = cfg.lambda1.unwrap_or(l1_default);
        let l2 = cfg.lambda2.unwrap_or(l2_default);
        let fit = robust_lasso(&y, &a, l1, l2)?;

        let w_a = DebiasWeights::identity_of_a(&a);
        let w_opt = if n < p {
            let (mu1, mu2, mu3) = default_mus(n, p)?;
            design_w(&a, mu1, mu2, mu3)?
        } else {
            DebiasWeights::identity_of_a(&a)
        };

        std::fs::create_dir_all(out)?;
        let mut summary = serde_json::Map::new();
        summary.insert("alpha".into(), alpha.into());
        summary.insert(
            "weights_source".into(),
            format!("{:?}", w_opt.source).into(),
        );

        let bw_a = debias_beta(&fit, &w_a.w, &y, &a)?;
        let dw_a = debias_delta(&fit, &w_a.w, &y, &a)?;
        let sa = sigma_a_diag(&a);
        let reports = [
            ("drlt_beta", drlt_beta_test(&bw_a, sigma, n, alpha)?),
            ("drlt_delta", drlt_delta_test(&dw_a, &sa, sigma, alpha)?),
        ];
        let bw_o = debias_beta(&fit, &w_opt.w, &y, &a)?;
        let dw_o = debias_delta(&fit, &w_opt.w, &y, &a)?;
        let sb = sigma_beta_diag(&w_opt.w, sigma);
        let sd = sigma_delta_diag(&w_opt.w, &a, sigma);
        let reports2 = [
            ("odrlt_beta", odrlt_beta_test(&bw_o, &sb, n, alpha)?),
            ("odrlt_delta", odrlt_delta_test(&dw_o, &sd, alpha)?),
        ];
        for (name, report) in reports.iter().chain(reports2.iter()) {
            let mut f = std::fs::File::create(out.join(format!("{name}.csv")))?;
            report.write_csv(&mut f)?;
            summary.insert(
                (*name).to_string(),
                serde_json::json!({
                    "rejections": report.rejected_indices().len(),
                    "threshold": report.threshold,
                }),
            );
        }
        if matches!(w_opt.source, WeightsSource::Fallback) {
            summary.insert("note".into(), "weight design infeasible; W = A".into());
        }
        std::fs::write(
            out.join("test_summary.json"),
            serde_json::to_string_pretty(&serde_json::Value::Object(summary))?,
        )?;
        println!("test reports written to {}", out.display());
        Ok(())
    })())
}

fn run_suite(id: ExperimentId, args: &ExpArgs) -> Result<anyhow::Result<()>, ConfigError> {
    let cfg = experiment_config(id, args)?;
    Ok((|| {
        let output = run_experiment(&cfg)?;
        write_outputs(&args.out, &output)?;
        println!(
            "{}: {} records over {} sweep values written to {}",
            cfg.experiment_id.as_str(),
            output.records.len(),
            cfg.effective_sweep().values.len(),
            args.out.display()
        );
        Ok(())
    })())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let staged = match &cli.cmd {
        Cmd::Gen { config, out, seed } => cmd_gen(config, out, *seed),
        Cmd::Fit { config, out, seed } => cmd_fit(config, out, *seed),
        Cmd::Test { config, out, seed } => cmd_test(config, out, *seed),
        Cmd::Table1(a) => run_suite(ExperimentId::Table1, a),
        Cmd::SuiteDelta(a) => run_suite(ExperimentId::DeltaSuite, a),
        Cmd::SuiteBeta(a) => run_suite(ExperimentId::BetaSuite, a),
        Cmd::SuiteRrmse(a) => run_suite(ExperimentId::RrmseSuite, a),
        Cmd::Qq(a) => run_suite(ExperimentId::QqExport, a),
    };
    match staged {
        Err(ConfigError(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
        Ok(Ok(())) => ExitCode::SUCCESS,
    }
}
