//! Command-line entry point: configuration loading, dispatch, and result
//! persistence. Every run writes a manifest (config hash, master seed,
//! version) next to its outputs; re-running with the same inputs reproduces
//! the outputs byte for byte.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conddens::{self, AuxiliaryDistribution};
use crate::data::{self, Dataset, RatioOracle};
use crate::divergence::{DivergenceId, DivergenceSpec};
use crate::el::{
    bootstrap_ci, chi2_quantile, drw_estimate, maximize_el, solve_lambda, target_only_estimate,
    wilks_ci, BootstrapEstimator, ElConfig, InferenceResult, KappaRule, MomentConstruction,
    Nuisances,
};
use crate::error::{Error, Result};
use crate::funclass::FunctionClassConfig;
use crate::harness::{self, ExperimentPlan, TableFormat};
use crate::moments::EstimatingFunction;
use crate::ratio;
use crate::Real;

#[derive(Parser, Debug)]
#[command(
    name = "covshift",
    version,
    about = "Estimation and empirical-likelihood inference under covariate shift"
)]
struct Cli {
    /// Worker threads (overrides the COVSHIFT_THREADS environment variable).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a Monte-Carlo simulation plan and write report tables.
    Simulate {
        /// Plan TOML file.
        #[arg(long)]
        plan: PathBuf,
        /// Output directory (created if absent).
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Estimate a target-population parameter from a CSV dataset.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        /// mean | median | quantile:<alpha>
        #[arg(long)]
        estimand: String,
        /// drw-mi | drw | mi
        #[arg(long, default_value = "drw-mi")]
        method: String,
        /// wilks | bootstrap
        #[arg(long, default_value = "auto")]
        ci: String,
        #[arg(long, default_value_t = 0.95)]
        level: Real,
        #[arg(long)]
        out: PathBuf,
        /// Optional TOML settings file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Imputation count; defaults to N/2.
        #[arg(long)]
        kappa: Option<usize>,
    },
    /// Fit a density-ratio model and write it with its metrics.
    DrFit {
        /// ddr | ks | pc
        #[arg(long, default_value = "ddr")]
        method: String,
        /// kl | reverse-kl | pearson | hellinger
        #[arg(long, default_value = "kl")]
        divergence: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Closed-form oracle for error reporting: unit | s1 | s2 | beta21.
        #[arg(long)]
        oracle: Option<String>,
    },
    /// Fit a conditional-density model; optionally dump imputation draws.
    CdeFit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "kl")]
        divergence: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Imputation count; defaults to N/2.
        #[arg(long)]
        kappa: Option<usize>,
        /// Write the imputation draws to this CSV for audit.
        #[arg(long)]
        dump_imputations: Option<PathBuf>,
    },
    /// Run the quick invariant suite and report pass/fail per check.
    Selfcheck,
}

/// Optional per-run settings shared by the fitting subcommands.
#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub funclass: FunctionClassConfig,
    pub el: ElConfig,
    /// Auxiliary response distribution (location, scale); matched to the
    /// responses when absent.
    pub aux: Option<AuxiliaryDistribution>,
    pub bootstrap_resamples: usize,
}

impl AppConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self { bootstrap_resamples: 200, ..Default::default() }),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                let mut cfg: AppConfig = toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("bad config {}: {e}", p.display())))?;
                if cfg.bootstrap_resamples == 0 {
                    cfg.bootstrap_resamples = 200;
                }
                Ok(cfg)
            }
        }
    }
}

/// Entry point; returns the process exit code. 0 on success, 1 for user and
/// configuration errors, 2 for numeric failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version through this path as well.
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    configure_threads(cli.threads);
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}

fn configure_threads(flag: Option<usize>) {
    let from_env = std::env::var("COVSHIFT_THREADS").ok().and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = flag.or(from_env) {
        // Ignore failure: the global pool may already exist (tests, repeat calls).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { plan, out_dir } => simulate(&plan, &out_dir),
        Command::Estimate { data, estimand, method, ci, level, out, config, seed, kappa } => {
            estimate(&data, &estimand, &method, &ci, level, &out, config.as_deref(), seed, kappa)
        }
        Command::DrFit { method, divergence, data, out, config, seed, oracle } => {
            dr_fit(&method, &divergence, &data, &out, config.as_deref(), seed, oracle.as_deref())
        }
        Command::CdeFit { data, divergence, out, config, seed, kappa, dump_imputations } => {
            cde_fit(&data, &divergence, &out, config.as_deref(), seed, kappa, dump_imputations.as_deref())
        }
        Command::Selfcheck => selfcheck(),
    }
}

#[derive(Serialize)]
struct Manifest {
    version: String,
    master_seed: u64,
    config_hash: String,
}

fn write_manifest(dir_or_file: &Path, seed: u64, config_repr: &str) -> Result<()> {
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: seed,
        config_hash: hex_digest(config_repr),
    };
    let path = if dir_or_file.is_dir() {
        dir_or_file.join("manifest.json")
    } else {
        sibling(dir_or_file, "manifest.json")
    };
    write_text(&path, &pretty_json(&manifest)?)
}

fn hex_digest(s: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(s.as_bytes());
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn pretty_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Numeric(format!("serialization failed: {e}")))
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, content)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn simulate(plan_path: &Path, out_dir: &Path) -> Result<()> {
    let text = std::fs::read_to_string(plan_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", plan_path.display())))?;
    let plan: ExperimentPlan = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("bad plan {}: {e}", plan_path.display())))?;
    plan.validate()?;
    std::fs::create_dir_all(out_dir)?;
    eprintln!(
        "simulate: {} scenario(s) x {} replication(s), methods {:?}",
        plan.scenarios.len(),
        plan.replications,
        plan.methods.iter().map(|m| m.name()).collect::<Vec<_>>()
    );
    let report = harness::run_plan(&plan)?;
    write_text(&out_dir.join("report.json"), &pretty_json(&report)?)?;
    write_text(&out_dir.join("report.csv"), &harness::report_table(&report, TableFormat::Csv))?;
    write_text(&out_dir.join("report.txt"), &harness::report_table(&report, TableFormat::Text))?;
    let mut log = String::from("scenario,method,replication,estimate,ci_lo,ci_hi,error\n");
    for r in &report.records {
        log.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.scenario,
            r.method.name(),
            r.replication,
            r.estimate.map_or(String::new(), |v| format!("{v}")),
            r.ci.map_or(String::new(), |(lo, _)| format!("{lo}")),
            r.ci.map_or(String::new(), |(_, hi)| format!("{hi}")),
            r.error.clone().unwrap_or_default().replace(',', ";"),
        ));
    }
    write_text(&out_dir.join("replications.csv"), &log)?;
    write_manifest(out_dir, plan.master_seed, &text)?;
    eprintln!("simulate: wrote {}", out_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EstimateOutput {
    estimand: String,
    method: String,
    theta_hat: Real,
    ci: Option<(Real, Real)>,
    ci_method: Option<String>,
    level: Real,
    lambda: Vec<Real>,
    log_el_at_hat: Real,
    converged: bool,
    iterations: usize,
    rn_samples: Vec<(Real, Real)>,
    n: usize,
    m: usize,
    tau_hat: Real,
    divergence_estimate: Option<Real>,
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    data: &Path,
    estimand: &str,
    method: &str,
    ci: &str,
    level: Real,
    out: &Path,
    config: Option<&Path>,
    seed: u64,
    kappa: Option<usize>,
) -> Result<()> {
    let cfg = AppConfig::load(config)?;
    let dataset = data::load_csv(data)?;
    let g = EstimatingFunction::parse(estimand)?;
    let spec = DivergenceSpec::<Real>::new(DivergenceId::Kl);
    let mut rng = data::stream_rng(seed, 0);
    let kappa_rule = kappa.map(KappaRule::Fixed).unwrap_or_default();
    let kappa_n = kappa_rule.resolve(dataset.len());

    let ci_mode = match (method, ci) {
        (_, "auto") => match method {
            "drw-mi" => "wilks",
            _ => "bootstrap",
        },
        (_, other) => other,
    };

    let (result, divergence_estimate): (InferenceResult, Option<Real>) = match method {
        "drw-mi" => {
            eprintln!("estimate: fitting density ratio");
            let r_hat = ratio::fit_ddr(&dataset, &spec, &cfg.funclass, &mut rng)?;
            eprintln!("estimate: fitting conditional density");
            let cde =
                conddens::fit_conditional_density(&dataset, &spec, &cfg.funclass, cfg.aux, &mut rng)?;
            let pooled = dataset.pooled_x();
            let imps = conddens::impute(&cde, pooled.view(), kappa_n, &mut rng)?;
            let nuis = Nuisances::from_models(&dataset, &r_hat, &imps, &g)?;
            let mut est = maximize_el(&dataset, nuis, &g, &cfg.el)?;
            match ci_mode {
                "wilks" => {
                    let interval = wilks_ci(&est, level, &cfg.el)?;
                    est.ci = Some(interval);
                }
                other => {
                    return Err(Error::Contract(format!(
                        "method drw-mi supports --ci wilks, not `{other}`"
                    )))
                }
            }
            let d = r_hat.divergence_estimate;
            (est, d)
        }
        "drw" => {
            eprintln!("estimate: fitting density ratio");
            let r_hat = ratio::fit_ddr(&dataset, &spec, &cfg.funclass, &mut rng)?;
            let mut est = drw_estimate(&dataset, &r_hat, &g, &cfg.el)?;
            match ci_mode {
                "bootstrap" => {
                    let frozen = match r_hat.capacity() {
                        Some(cap) => cfg.funclass.with_capacity(cap),
                        None => cfg.funclass.clone(),
                    };
                    eprintln!("estimate: bootstrap ({} resamples)", cfg.bootstrap_resamples);
                    let estimator = BootstrapEstimator::Drw { spec: &spec, funclass: &frozen };
                    let interval = bootstrap_ci(
                        &estimator,
                        &dataset,
                        &g,
                        cfg.bootstrap_resamples,
                        level,
                        &cfg.el,
                        &mut rng,
                    )?;
                    est.ci = Some(interval);
                }
                "wilks" => {
                    // Surface the contract violation through the same error
                    // the library raises.
                    wilks_ci(&est, level, &cfg.el)?;
                    unreachable!("wilks_ci rejects the DRW construction");
                }
                other => return Err(Error::Config(format!("unknown ci method `{other}`"))),
            }
            let d = r_hat.divergence_estimate;
            (est, d)
        }
        "mi" => {
            eprintln!("estimate: fitting conditional density");
            let cde =
                conddens::fit_conditional_density(&dataset, &spec, &cfg.funclass, cfg.aux, &mut rng)?;
            let pooled = dataset.pooled_x();
            let imps = conddens::impute(&cde, pooled.view(), kappa_n, &mut rng)?;
            let mut est = target_only_estimate(&dataset, &imps, &g, &cfg.el)?;
            match ci_mode {
                "bootstrap" => {
                    let frozen = match &cde {
                        conddens::CondDensityModel::Fitted { ratio_fit, .. } => {
                            cfg.funclass.with_capacity(ratio_fit.capacity())
                        }
                        _ => cfg.funclass.clone(),
                    };
                    eprintln!("estimate: bootstrap ({} resamples)", cfg.bootstrap_resamples);
                    let estimator = BootstrapEstimator::Mi {
                        spec: &spec,
                        funclass: &frozen,
                        aux: cfg.aux,
                        kappa: KappaRule::Fixed(kappa_n),
                    };
                    let interval = bootstrap_ci(
                        &estimator,
                        &dataset,
                        &g,
                        cfg.bootstrap_resamples,
                        level,
                        &cfg.el,
                        &mut rng,
                    )?;
                    est.ci = Some(interval);
                }
                "wilks" => {
                    wilks_ci(&est, level, &cfg.el)?;
                    unreachable!("wilks_ci rejects the target-only construction");
                }
                other => return Err(Error::Config(format!("unknown ci method `{other}`"))),
            }
            (est, None)
        }
        other => {
            return Err(Error::Config(format!(
                "unknown method `{other}` (expected drw-mi | drw | mi)"
            )))
        }
    };

    let rn_samples = if result.construction == MomentConstruction::Orthogonal {
        let half = result
            .ci
            .map(|(lo, hi)| (hi - lo).max(1e-6))
            .unwrap_or_else(|| result.theta_hat[0].abs().max(1.0) * 0.5);
        result.rn_samples(half, 21)
    } else {
        Vec::new()
    };
    let output = EstimateOutput {
        estimand: estimand.to_string(),
        method: method.to_string(),
        theta_hat: result.theta_hat[0],
        ci: result.ci,
        ci_method: result.ci.map(|_| ci_mode.to_string()),
        level,
        lambda: result.lambda.clone(),
        log_el_at_hat: result.log_el_at_hat,
        converged: result.converged,
        iterations: result.iterations,
        rn_samples,
        n: dataset.n(),
        m: dataset.m(),
        tau_hat: dataset.tau_hat(),
        divergence_estimate,
    };
    write_text(out, &pretty_json(&output)?)?;
    let config_repr = format!(
        "estimate data={} estimand={estimand} method={method} ci={ci} level={level} kappa={kappa:?} cfg={}",
        data.display(),
        toml::to_string(&cfg).unwrap_or_default()
    );
    write_manifest(out, seed, &config_repr)?;
    eprintln!("estimate: theta_hat = {:.6}, wrote {}", output.theta_hat, out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// dr-fit
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct DrFitMetrics {
    method: String,
    divergence: Option<String>,
    objective: Option<Real>,
    divergence_estimate: Option<Real>,
    oracle_l2_error: Option<Real>,
    n: usize,
    m: usize,
    d: usize,
}

fn parse_oracle(name: &str, dataset: &Dataset) -> Result<RatioOracle> {
    match name {
        "unit" => Ok(RatioOracle::Unit),
        "s1" => Ok(RatioOracle::S1Beta { d: dataset.dim() }),
        "s2" => Ok(RatioOracle::s2_gaussian(dataset.dim())),
        "beta21" => Ok(RatioOracle::LinearBeta21),
        other => Err(Error::Config(format!(
            "unknown oracle `{other}` (expected unit | s1 | s2 | beta21)"
        ))),
    }
}

fn dr_fit(
    method: &str,
    divergence: &str,
    data: &Path,
    out: &Path,
    config: Option<&Path>,
    seed: u64,
    oracle: Option<&str>,
) -> Result<()> {
    let cfg = AppConfig::load(config)?;
    let dataset = data::load_csv(data)?;
    let mut rng = data::stream_rng(seed, 0);
    let model = match method {
        "ddr" => {
            let spec = DivergenceSpec::<Real>::new(DivergenceId::parse(divergence)?);
            ratio::fit_ddr(&dataset, &spec, &cfg.funclass, &mut rng)?
        }
        "ks" => ratio::fit_kernel_smoothing(
            &dataset,
            None,
            (cfg.funclass.clamp_min, cfg.funclass.clamp_max),
        )?,
        "pc" => ratio::fit_prob_classification(
            &dataset,
            (cfg.funclass.clamp_min, cfg.funclass.clamp_max),
        )?,
        other => {
            return Err(Error::Config(format!("unknown method `{other}` (expected ddr | ks | pc)")))
        }
    };
    let oracle_l2_error = match oracle {
        None => None,
        Some(name) => {
            let oracle = parse_oracle(name, &dataset)?;
            let pooled = dataset.pooled_x();
            Some(ratio::empirical_l2_error(&model, &oracle, pooled.view())?)
        }
    };
    let metrics = DrFitMetrics {
        method: method.to_string(),
        divergence: model.divergence.map(|d| d.name().to_string()),
        objective: model.objective_value,
        divergence_estimate: model.divergence_estimate,
        oracle_l2_error,
        n: dataset.n(),
        m: dataset.m(),
        d: dataset.dim(),
    };
    write_text(out, &(model.to_json() + "\n"))?;
    write_text(&sibling(out, "metrics.json"), &pretty_json(&metrics)?)?;
    let config_repr = format!(
        "dr-fit method={method} divergence={divergence} data={} cfg={}",
        data.display(),
        toml::to_string(&cfg).unwrap_or_default()
    );
    write_manifest(out, seed, &config_repr)?;
    eprintln!("dr-fit: wrote {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// cde-fit
// ---------------------------------------------------------------------------

fn cde_fit(
    data: &Path,
    divergence: &str,
    out: &Path,
    config: Option<&Path>,
    seed: u64,
    kappa: Option<usize>,
    dump_imputations: Option<&Path>,
) -> Result<()> {
    let cfg = AppConfig::load(config)?;
    let dataset = data::load_csv(data)?;
    let spec = DivergenceSpec::<Real>::new(DivergenceId::parse(divergence)?);
    let mut rng = data::stream_rng(seed, 0);
    let model =
        conddens::fit_conditional_density(&dataset, &spec, &cfg.funclass, cfg.aux, &mut rng)?;
    write_text(out, &(serde_json::to_string_pretty(&model).expect("model serializes") + "\n"))?;
    if let Some(dump) = dump_imputations {
        let kappa_n = kappa.map(KappaRule::Fixed).unwrap_or_default().resolve(dataset.len());
        let pooled = dataset.pooled_x();
        let imps = conddens::impute(&model, pooled.view(), kappa_n, &mut rng)?;
        let mut text = String::new();
        for row in imps.draws.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        write_text(dump, &text)?;
    }
    let config_repr = format!(
        "cde-fit divergence={divergence} data={} kappa={kappa:?} cfg={}",
        data.display(),
        toml::to_string(&cfg).unwrap_or_default()
    );
    write_manifest(out, seed, &config_repr)?;
    eprintln!("cde-fit: wrote {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// selfcheck
// ---------------------------------------------------------------------------

fn selfcheck() -> Result<()> {
    let mut failures = 0usize;
    let mut check = |name: &str, pass: bool| {
        println!("{}  {name}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failures += 1;
        }
    };

    let kl = DivergenceSpec::<Real>::new(DivergenceId::Kl);
    check("kl losses at r = 1 are (1, 1)", kl.losses(1.0).map(|v| v == (1.0, 1.0)).unwrap_or(false));
    let pearson = DivergenceSpec::<Real>::new(DivergenceId::Pearson);
    check(
        "pearson losses at r = 1 are (0, 0)",
        pearson.losses(1.0).map(|v| v == (0.0, 0.0)).unwrap_or(false),
    );
    let hellinger = DivergenceSpec::<Real>::new(DivergenceId::Hellinger);
    check(
        "hellinger losses at r = 4 are (1, 1/2)",
        hellinger
            .losses(4.0)
            .map(|(a, b)| (a - 1.0).abs() < 1e-12 && (b - 0.5).abs() < 1e-12)
            .unwrap_or(false),
    );
    check("kl rejects r = 0", kl.losses(0.0).is_err());

    let mut rel_ok = true;
    for spec in [&kl, &pearson, &hellinger] {
        let mut r: Real = 0.1;
        while r < 10.0 {
            let lhs = spec.ell1_deriv(r);
            let rhs = r * spec.ell2_deriv(r);
            if (lhs - rhs).abs() > 1e-10 * lhs.abs().max(1.0) {
                rel_ok = false;
            }
            r += 0.37;
        }
    }
    check("first-order relation ell1' = r ell2'", rel_ok);

    let rows: ndarray::Array2<Real> = ndarray::array![[1.0], [-1.0], [0.5], [-0.5]];
    let sol = solve_lambda(rows.view(), &ElConfig::default());
    check(
        "symmetric rows give lambda = 0 and uniform weights",
        sol.as_ref()
            .map(|s| s.lambda[0].abs() < 1e-9 && s.weights.iter().all(|w| (w - 0.25).abs() < 1e-9))
            .unwrap_or(false),
    );
    let onesided: ndarray::Array2<Real> = ndarray::array![[0.4], [1.0], [0.2]];
    check(
        "one-sided rows raise the convex-hull violation",
        matches!(solve_lambda(onesided.view(), &ElConfig::default()), Err(Error::ConvexHullViolation)),
    );
    check("chi-square 95% threshold is 3.841", (chi2_quantile(0.95, 1) - 3.841).abs() < 5e-4);

    check(
        "beta(6/5,6/5) density vanishes at the endpoints",
        data::beta65_pdf(0.0) == 0.0 && data::beta65_pdf(1.0) == 0.0,
    );
    let d2 = data::true_density_ratio_s1(ndarray::arr1(&[0.3, 0.8]).view()).unwrap();
    let d1a = data::beta65_pdf(0.3);
    let d1b = data::beta65_pdf(0.8);
    check("s1 ratio factorizes over coordinates", (d2 - d1a * d1b).abs() < 1e-12);

    let aux = AuxiliaryDistribution::new(0.0, 1.0).unwrap();
    check(
        "auxiliary normal pdf integrates to about 1 on a grid",
        {
            let step = 0.01;
            let total: Real = (-600..600).map(|i| aux.pdf(i as Real * step) * step).sum();
            (total - 1.0).abs() < 1e-3
        },
    );

    if failures == 0 {
        println!("selfcheck: all checks passed");
        Ok(())
    } else {
        Err(Error::Numeric(format!("selfcheck: {failures} check(s) failed")))
    }
}
