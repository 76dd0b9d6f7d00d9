//! Monte-Carlo replication engine: runs the estimator comparison protocol on
//! the synthetic designs and aggregates bias, spread, MSE, coverage, and
//! interval length per method.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conddens::{self, CondDensityModel};
use crate::data::{
    generate_covariates, generate_response, stream_rng, CovariateSetting, Dataset, RatioOracle,
    ResponseModel, SampleRole, ScenarioConfig,
};
use crate::divergence::{DivergenceId, DivergenceSpec};
use crate::el::{
    bootstrap_ci, drw_estimate, maximize_el, target_only_estimate, wilks_ci, BootstrapEstimator,
    ElConfig, KappaRule, Nuisances,
};
use crate::error::{Error, Result};
use crate::funclass::FunctionClassConfig;
use crate::moments::{EstimandKind, EstimatingFunction};
use crate::ratio::{self, RatioModel};
use crate::Real;

/// Estimators the harness can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Density-ratio weighting with fitted ratio; bootstrap interval.
    Drw,
    /// Imputation-only estimator with fitted conditional density; bootstrap
    /// interval.
    Mi,
    /// Orthogonal construction with estimated nuisances; Wilks interval.
    DrwMiE,
    /// Orthogonal construction with true nuisances; Wilks interval.
    /// Simulation scenarios only.
    DrwMiT,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Drw => "drw",
            Method::Mi => "mi",
            Method::DrwMiE => "drw-mi-e",
            Method::DrwMiT => "drw-mi-t",
        }
    }
}

/// Full description of one simulation experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scenarios: Vec<ScenarioConfig>,
    /// `mean` | `median` | `quantile:<alpha>`.
    pub estimand: String,
    pub methods: Vec<Method>,
    pub replications: usize,
    #[serde(default = "default_level")]
    pub ci_level: Real,
    #[serde(default)]
    pub master_seed: u64,
    /// Imputation count; defaults to N/2.
    #[serde(default)]
    pub kappa: Option<usize>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
    /// Skip interval construction (point-estimate studies).
    #[serde(default = "default_true")]
    pub compute_ci: bool,
    #[serde(default = "default_divergence")]
    pub divergence: String,
    #[serde(default)]
    pub funclass: FunctionClassConfig,
    #[serde(default)]
    pub el: ElConfig,
    /// Monte-Carlo draws behind the true-parameter oracle.
    #[serde(default = "default_oracle_draws")]
    pub oracle_draws: usize,
}

fn default_level() -> Real {
    0.95
}
fn default_bootstrap() -> usize {
    200
}
fn default_true() -> bool {
    true
}
fn default_divergence() -> String {
    "kl".into()
}
fn default_oracle_draws() -> usize {
    10_000_000
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Config("plan needs at least one scenario".into()));
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::Config("ci_level must be in (0,1)".into()));
        }
        EstimatingFunction::parse(&self.estimand)?;
        DivergenceId::parse(&self.divergence)?;
        self.funclass.validate()?;
        Ok(())
    }
}

/// One replication of one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub scenario: usize,
    pub method: Method,
    pub replication: usize,
    pub estimate: Option<Real>,
    pub ci: Option<(Real, Real)>,
    pub error: Option<String>,
}

/// Aggregates for one (scenario, method) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub scenario: usize,
    pub method: Method,
    pub bias: Real,
    pub std_dev: Real,
    pub mse: Real,
    pub coverage: Option<Real>,
    pub ci_length: Option<Real>,
    pub replications_used: usize,
    pub failures: usize,
}

/// Everything a simulation run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub plan: ExperimentPlan,
    pub true_parameters: Vec<Real>,
    pub summaries: Vec<MethodSummary>,
    pub records: Vec<ReplicationRecord>,
}

#[derive(PartialEq, Eq, Hash, Clone, Copy)]
struct OracleKey {
    setting: CovariateSetting,
    model: ResponseModel,
    d: usize,
    estimand_bits: (u64, u64),
    draws: usize,
}

fn oracle_cache() -> &'static Mutex<HashMap<OracleKey, Real>> {
    static CACHE: OnceLock<Mutex<HashMap<OracleKey, Real>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Seed reserved for the true-parameter oracle; independent of every
/// replication stream.
const ORACLE_SEED: u64 = 0x5eed_0a_c1e0;

/// True target-population parameter of a scenario, by a large one-off
/// Monte-Carlo of target draws (mean or empirical quantile), cached per
/// scenario under a fixed dedicated seed.
pub fn true_parameter(scenario: &ScenarioConfig, g: &EstimatingFunction) -> Result<Real> {
    true_parameter_with_draws(scenario, g, default_oracle_draws())
}

pub fn true_parameter_with_draws(
    scenario: &ScenarioConfig,
    g: &EstimatingFunction,
    draws: usize,
) -> Result<Real> {
    let estimand_bits = match g.kind() {
        EstimandKind::Mean => (0u64, 0u64),
        EstimandKind::Quantile { alpha } => (1u64, alpha.to_bits()),
        EstimandKind::Custom { .. } => {
            return Err(Error::Contract(
                "the Monte-Carlo parameter oracle supports mean and quantile estimands".into(),
            ))
        }
    };
    let key = OracleKey {
        setting: scenario.covariate_setting,
        model: scenario.response_model,
        d: scenario.d,
        estimand_bits,
        draws,
    };
    if let Some(v) = oracle_cache().lock().expect("cache lock").get(&key) {
        return Ok(*v);
    }
    let chunks: usize = 64;
    let per_chunk = draws.div_ceil(chunks);
    let samples: Vec<Vec<Real>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(ORACLE_SEED ^ (key.d as u64) << 8, c as u64);
            let x = generate_covariates(
                scenario.covariate_setting,
                SampleRole::Target,
                per_chunk,
                scenario.d,
                &mut rng,
            )
            .expect("validated scenario");
            (0..per_chunk)
                .map(|i| generate_response(x.row(i), scenario.response_model, &mut rng))
                .collect()
        })
        .collect();
    let mut ys: Vec<Real> = samples.into_iter().flatten().collect();
    let value = match g.kind() {
        EstimandKind::Mean => ys.iter().sum::<Real>() / ys.len() as Real,
        EstimandKind::Quantile { alpha } => {
            let k = ((ys.len() as Real - 1.0) * alpha).round() as usize;
            let (_, v, _) = ys.select_nth_unstable_by(k, Real::total_cmp);
            *v
        }
        EstimandKind::Custom { .. } => unreachable!(),
    };
    oracle_cache().lock().expect("cache lock").insert(key, value);
    Ok(value)
}

struct RepOutcome {
    records: Vec<ReplicationRecord>,
}

/// Run every replication of the plan and aggregate. Replications fan out
/// across threads; records are folded in replication order regardless of
/// completion order.
pub fn run_plan(plan: &ExperimentPlan) -> Result<SimReport> {
    plan.validate()?;
    let g = EstimatingFunction::parse(&plan.estimand)?;
    let spec = DivergenceSpec::<Real>::new(DivergenceId::parse(&plan.divergence)?);
    let mut true_parameters = Vec::with_capacity(plan.scenarios.len());
    for s in &plan.scenarios {
        true_parameters.push(true_parameter_with_draws(s, &g, plan.oracle_draws)?);
    }

    let jobs: Vec<(usize, usize)> = (0..plan.scenarios.len())
        .flat_map(|s| (0..plan.replications).map(move |r| (s, r)))
        .collect();
    let outcomes: Vec<RepOutcome> = jobs
        .par_iter()
        .map(|&(s_idx, rep)| run_replication(plan, &g, &spec, s_idx, rep))
        .collect();

    let mut records: Vec<ReplicationRecord> = outcomes.into_iter().flat_map(|o| o.records).collect();
    records.sort_by_key(|r| (r.scenario, method_order(&plan.methods, r.method), r.replication));

    let mut summaries = Vec::new();
    for (s_idx, &theta0) in true_parameters.iter().enumerate() {
        for &method in &plan.methods {
            let cell: Vec<&ReplicationRecord> = records
                .iter()
                .filter(|r| r.scenario == s_idx && r.method == method)
                .collect();
            let summary = summarize(s_idx, method, theta0, &cell);
            let failures = summary.failures;
            if failures * 10 > plan.replications {
                return Err(Error::Estimation(format!(
                    "method {} failed {failures} of {} replications; first error: {}",
                    method.name(),
                    plan.replications,
                    cell.iter()
                        .filter_map(|r| r.error.clone())
                        .next()
                        .unwrap_or_else(|| "unknown".into())
                )));
            }
            summaries.push(summary);
        }
    }
    Ok(SimReport { plan: plan.clone(), true_parameters, summaries, records })
}

fn method_order(methods: &[Method], m: Method) -> usize {
    methods.iter().position(|&x| x == m).unwrap_or(usize::MAX)
}

fn summarize(
    scenario: usize,
    method: Method,
    theta0: Real,
    cell: &[&ReplicationRecord],
) -> MethodSummary {
    let estimates: Vec<Real> = cell.iter().filter_map(|r| r.estimate).collect();
    let failures = cell.iter().filter(|r| r.error.is_some()).count();
    let k = estimates.len();
    let (bias, std_dev, mse) = if k == 0 {
        (Real::NAN, Real::NAN, Real::NAN)
    } else {
        let kf = k as Real;
        let mean = estimates.iter().sum::<Real>() / kf;
        let bias = mean - theta0;
        let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<Real>() / kf;
        let mse = estimates.iter().map(|e| (e - theta0) * (e - theta0)).sum::<Real>() / kf;
        (bias, var.sqrt(), mse)
    };
    let cis: Vec<(Real, Real)> = cell.iter().filter_map(|r| r.ci).collect();
    let (coverage, ci_length) = if cis.is_empty() {
        (None, None)
    } else {
        let kc = cis.len() as Real;
        let cov = cis.iter().filter(|(lo, hi)| *lo <= theta0 && theta0 <= *hi).count() as Real / kc;
        let len = cis.iter().map(|(lo, hi)| hi - lo).sum::<Real>() / kc;
        (Some(cov), Some(len))
    };
    MethodSummary {
        scenario,
        method,
        bias,
        std_dev,
        mse,
        coverage,
        ci_length,
        replications_used: k,
        failures,
    }
}

fn run_replication(
    plan: &ExperimentPlan,
    g: &EstimatingFunction,
    spec: &DivergenceSpec<Real>,
    s_idx: usize,
    rep: usize,
) -> RepOutcome {
    let scenario = &plan.scenarios[s_idx];
    let stream = ((s_idx as u64) << 32) | rep as u64;
    let mut rng = stream_rng(plan.master_seed, stream);
    let mut records = Vec::new();

    let dataset = match scenario.generate_with(&mut rng) {
        Ok(d) => d,
        Err(e) => {
            for &method in &plan.methods {
                records.push(ReplicationRecord {
                    scenario: s_idx,
                    method,
                    replication: rep,
                    estimate: None,
                    ci: None,
                    error: Some(format!("dataset generation: {e}")),
                });
            }
            return RepOutcome { records };
        }
    };
    let kappa = plan.kappa.unwrap_or_else(|| KappaRule::HalfN.resolve(dataset.len())).max(1);

    // Shared fitted nuisances across the methods that use them.
    let needs_ratio = plan.methods.iter().any(|m| matches!(m, Method::Drw | Method::DrwMiE));
    let needs_cde = plan.methods.iter().any(|m| matches!(m, Method::Mi | Method::DrwMiE));
    let ratio_fitted: Option<Result<RatioModel>> =
        needs_ratio.then(|| ratio::fit_ddr(&dataset, spec, &plan.funclass, &mut rng));
    let cde_fitted: Option<Result<(CondDensityModel, conddens::ImputationSet)>> =
        needs_cde.then(|| {
            let cde =
                conddens::fit_conditional_density(&dataset, spec, &plan.funclass, None, &mut rng)?;
            let pooled = dataset.pooled_x();
            let imps = conddens::impute(&cde, pooled.view(), kappa, &mut rng)?;
            Ok((cde, imps))
        });

    for &method in &plan.methods {
        let result = run_method(
            plan,
            g,
            spec,
            scenario,
            &dataset,
            method,
            kappa,
            ratio_fitted.as_ref(),
            cde_fitted.as_ref(),
            &mut rng,
        );
        let record = match result {
            Ok((estimate, ci)) => ReplicationRecord {
                scenario: s_idx,
                method,
                replication: rep,
                estimate: Some(estimate),
                ci,
                error: None,
            },
            Err(e) => ReplicationRecord {
                scenario: s_idx,
                method,
                replication: rep,
                estimate: None,
                ci: None,
                error: Some(e.to_string()),
            },
        };
        records.push(record);
    }
    RepOutcome { records }
}

#[allow(clippy::too_many_arguments)]
fn run_method(
    plan: &ExperimentPlan,
    g: &EstimatingFunction,
    spec: &DivergenceSpec<Real>,
    scenario: &ScenarioConfig,
    dataset: &Dataset,
    method: Method,
    kappa: usize,
    ratio_fitted: Option<&Result<RatioModel>>,
    cde_fitted: Option<&Result<(CondDensityModel, conddens::ImputationSet)>>,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(Real, Option<(Real, Real)>)> {
    let clone_err = |e: &Error| Error::Estimation(format!("nuisance fit: {e}"));
    match method {
        Method::DrwMiE => {
            let r_hat = ratio_fitted.expect("ratio requested").as_ref().map_err(clone_err)?;
            let (_, imps) = cde_fitted.expect("cde requested").as_ref().map_err(clone_err)?;
            let nuis = Nuisances::from_models(dataset, r_hat, imps, g)?;
            let est = maximize_el(dataset, nuis, g, &plan.el)?;
            let ci = if plan.compute_ci {
                Some(wilks_ci(&est, plan.ci_level, &plan.el)?)
            } else {
                None
            };
            Ok((est.theta_hat[0], ci))
        }
        Method::DrwMiT => {
            let oracle = RatioOracle::for_setting(scenario.covariate_setting, scenario.d);
            let r_hat = RatioModel::from_oracle(oracle);
            let cde = CondDensityModel::OracleGaussian { model: scenario.response_model };
            let pooled = dataset.pooled_x();
            let imps = conddens::impute(&cde, pooled.view(), kappa, rng)?;
            let nuis = Nuisances::from_models(dataset, &r_hat, &imps, g)?;
            let est = maximize_el(dataset, nuis, g, &plan.el)?;
            let ci = if plan.compute_ci {
                Some(wilks_ci(&est, plan.ci_level, &plan.el)?)
            } else {
                None
            };
            Ok((est.theta_hat[0], ci))
        }
        Method::Drw => {
            let r_hat = ratio_fitted.expect("ratio requested").as_ref().map_err(clone_err)?;
            let est = drw_estimate(dataset, r_hat, g, &plan.el)?;
            let ci = if plan.compute_ci {
                let frozen = match r_hat.capacity() {
                    Some(cap) => plan.funclass.with_capacity(cap),
                    None => plan.funclass.clone(),
                };
                let estimator = BootstrapEstimator::Drw { spec, funclass: &frozen };
                Some(bootstrap_ci(
                    &estimator,
                    dataset,
                    g,
                    plan.bootstrap_resamples,
                    plan.ci_level,
                    &plan.el,
                    rng,
                )?)
            } else {
                None
            };
            Ok((est.theta_hat[0], ci))
        }
        Method::Mi => {
            let (cde, imps) = cde_fitted.expect("cde requested").as_ref().map_err(clone_err)?;
            let est = target_only_estimate(dataset, imps, g, &plan.el)?;
            let ci = if plan.compute_ci {
                let frozen = match cde {
                    CondDensityModel::Fitted { ratio_fit, .. } => {
                        plan.funclass.with_capacity(ratio_fit.capacity())
                    }
                    CondDensityModel::OracleGaussian { .. } => plan.funclass.clone(),
                };
                let estimator = BootstrapEstimator::Mi {
                    spec,
                    funclass: &frozen,
                    aux: None,
                    kappa: KappaRule::Fixed(kappa),
                };
                Some(bootstrap_ci(
                    &estimator,
                    dataset,
                    g,
                    plan.bootstrap_resamples,
                    plan.ci_level,
                    &plan.el,
                    rng,
                )?)
            } else {
                None
            };
            Ok((est.theta_hat[0], ci))
        }
    }
}

/// Table output format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Text,
}

/// Render the per-method summary table, four decimals throughout.
pub fn report_table(report: &SimReport, format: TableFormat) -> String {
    let header = ["scenario", "n", "method", "bias", "std_dev", "mse", "coverage", "ci_length"];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for s in &report.summaries {
        let scenario = &report.plan.scenarios[s.scenario];
        rows.push(vec![
            format!("{}", s.scenario),
            format!("{}", scenario.n),
            s.method.name().to_string(),
            format!("{:.4}", s.bias),
            format!("{:.4}", s.std_dev),
            format!("{:.4}", s.mse),
            s.coverage.map_or(String::new(), |v| format!("{v:.4}")),
            s.ci_length.map_or(String::new(), |v| format!("{v:.4}")),
        ]);
    }
    match format {
        TableFormat::Csv => {
            rows.into_iter().map(|r| r.join(",")).collect::<Vec<_>>().join("\n") + "\n"
        }
        TableFormat::Text => {
            let widths: Vec<usize> = (0..rows[0].len())
                .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
                .collect();
            rows.into_iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .map(|(c, v)| format!("{v:>width$}", width = widths[c]))
                        .collect::<Vec<_>>()
                        .join("  ")
                })
                .collect::<Vec<_>>()
                .join("\n")
                + "\n"
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_plan() -> ExperimentPlan {
        let mut funclass = FunctionClassConfig::mlp_default();
        funclass.degree_or_width_candidates = vec![8];
        funclass.depth_candidates = vec![1];
        funclass.optimizer.max_epochs = 120;
        ExperimentPlan {
            scenarios: vec![ScenarioConfig::new(
                CovariateSetting::S1,
                ResponseModel::M2,
                160,
                2,
                0,
            )],
            estimand: "mean".into(),
            methods: vec![Method::DrwMiT],
            replications: 3,
            ci_level: 0.95,
            master_seed: 11,
            kappa: Some(50),
            bootstrap_resamples: 200,
            compute_ci: false,
            divergence: "kl".into(),
            funclass,
            el: ElConfig::default(),
            oracle_draws: 200_000,
        }
    }

    #[test]
    fn m1_mean_is_zero_by_symmetry() {
        let scenario = ScenarioConfig::new(CovariateSetting::S1, ResponseModel::M1, 100, 4, 0);
        let g = EstimatingFunction::mean();
        let v = true_parameter_with_draws(&scenario, &g, 2_000_000).unwrap();
        assert!(v.abs() < 0.01, "M1 target mean was {v}");
    }

    #[test]
    fn m3_median_is_bracketed() {
        let scenario = ScenarioConfig::new(CovariateSetting::S1, ResponseModel::M3, 100, 5, 0);
        let g = EstimatingFunction::quantile(0.5).unwrap();
        let v = true_parameter_with_draws(&scenario, &g, 500_000).unwrap();
        assert!((0.0..=1.0).contains(&v), "M3 median was {v}");
    }

    #[test]
    fn oracle_is_cached_and_deterministic() {
        let scenario = ScenarioConfig::new(CovariateSetting::S2, ResponseModel::M2, 100, 3, 0);
        let g = EstimatingFunction::mean();
        let a = true_parameter_with_draws(&scenario, &g, 300_000).unwrap();
        let b = true_parameter_with_draws(&scenario, &g, 300_000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_seeds_give_identical_reports() {
        let plan = tiny_plan();
        let a = run_plan(&plan).unwrap();
        let b = run_plan(&plan).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn mse_identity_holds() {
        let plan = tiny_plan();
        let report = run_plan(&plan).unwrap();
        for s in &report.summaries {
            assert!(
                (s.mse - (s.bias * s.bias + s.std_dev * s.std_dev)).abs() < 1e-10,
                "mse {} vs bias^2+var {}",
                s.mse,
                s.bias * s.bias + s.std_dev * s.std_dev
            );
        }
    }

    #[test]
    fn single_replication_has_zero_spread() {
        let mut plan = tiny_plan();
        plan.replications = 1;
        let report = run_plan(&plan).unwrap();
        assert_eq!(report.summaries[0].replications_used, 1);
        assert_eq!(report.summaries[0].std_dev, 0.0);
    }

    #[test]
    fn empty_method_list_gives_header_only_table() {
        let mut plan = tiny_plan();
        plan.methods = Vec::new();
        let report = run_plan(&plan).unwrap();
        let table = report_table(&report, TableFormat::Csv);
        assert_eq!(table.lines().count(), 1);
        let text = report_table(&report, TableFormat::Text);
        assert!(text.contains("coverage"));
    }

    #[test]
    fn two_methods_give_two_rows_per_scenario() {
        let mut plan = tiny_plan();
        plan.methods = vec![Method::DrwMiT, Method::Mi];
        plan.replications = 2;
        let report = run_plan(&plan).unwrap();
        let table = report_table(&report, TableFormat::Csv);
        assert_eq!(table.lines().count(), 3, "{table}");
    }

    #[test]
    fn plan_toml_round_trips_and_rejects_unknown_keys() {
        let plan = tiny_plan();
        let s = toml::to_string(&plan).unwrap();
        let back: ExperimentPlan = toml::from_str(&s).unwrap();
        assert_eq!(plan, back);
        let bad = format!("{s}\nunknown_key = 3\n");
        assert!(toml::from_str::<ExperimentPlan>(&bad).is_err());
    }
}
