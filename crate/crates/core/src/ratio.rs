//! Density-ratio estimators: the divergence-based estimator (DDR) plus two
//! conventional baselines, and the empirical error metrics used to compare
//! them against closed-form oracles.

use ndarray::{Array1, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, RatioOracle};
use crate::divergence::{self, DivergenceId, DivergenceSpec};
use crate::error::{Error, Result};
use crate::funclass::{self, FittedFunction, FunctionClassConfig, PolyBasis};
use crate::Real;

/// A fitted density-ratio model. Evaluation is clamped to `[r_min, r_max]`
/// regardless of backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioModel {
    backend: RatioBackend,
    clamp_min: Real,
    clamp_max: Real,
    /// Final empirical objective of the fit, when one exists.
    pub objective_value: Option<Real>,
    /// Implied divergence estimate between target and source covariates.
    pub divergence_estimate: Option<Real>,
    /// Divergence used by the fit, when one was.
    pub divergence: Option<DivergenceId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RatioBackend {
    Fitted { model: FittedFunction<Real> },
    KernelSmoothing { model: KernelRatio },
    Classifier { model: LogisticRatio },
    Oracle { oracle: RatioOracle },
}

impl RatioModel {
    /// Wrap a closed-form oracle as a ratio model (true-nuisance estimator
    /// variants and evaluation harnesses).
    pub fn from_oracle(oracle: RatioOracle) -> Self {
        Self {
            backend: RatioBackend::Oracle { oracle },
            clamp_min: Real::MIN_POSITIVE,
            clamp_max: Real::INFINITY,
            objective_value: None,
            divergence_estimate: None,
            divergence: None,
        }
    }

    pub fn clamp(&self) -> (Real, Real) {
        (self.clamp_min, self.clamp_max)
    }

    /// Fitted-capacity descriptor for DDR backends, used to freeze capacity
    /// on bootstrap refits.
    pub fn capacity(&self) -> Option<funclass::Capacity> {
        match &self.backend {
            RatioBackend::Fitted { model } => Some(model.capacity()),
            _ => None,
        }
    }

    pub fn evaluate(&self, x: ArrayView2<'_, Real>) -> Result<Array1<Real>> {
        let mut out = match &self.backend {
            RatioBackend::Fitted { model } => model.evaluate(x)?,
            RatioBackend::KernelSmoothing { model } => model.evaluate(x)?,
            RatioBackend::Classifier { model } => model.evaluate(x)?,
            RatioBackend::Oracle { oracle } => oracle.evaluate(x)?,
        };
        for v in out.iter_mut() {
            *v = v.min(self.clamp_max).max(self.clamp_min);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ratio model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("bad ratio model JSON: {e}")))
    }
}

/// Divergence-based density-ratio estimation: empirical risk minimization of
/// the loss pair over the configured function class.
pub fn fit_ddr(
    dataset: &Dataset,
    spec: &DivergenceSpec<Real>,
    cfg: &FunctionClassConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RatioModel> {
    let fitted = funclass::fit_erm(cfg, spec, dataset.source_x(), dataset.target_x(), rng)?;
    let objective = fitted.objective_value();
    Ok(RatioModel {
        backend: RatioBackend::Fitted { model: fitted },
        clamp_min: cfg.clamp_min,
        clamp_max: cfg.clamp_max,
        objective_value: Some(objective),
        divergence_estimate: Some(divergence::divergence_estimate(spec, objective)),
        divergence: spec.id(),
    })
}

/// Kernel-smoothing baseline: Gaussian product-kernel density estimates for
/// each sample with cross-validated bandwidths, combined as q_hat / p_hat.
pub fn fit_kernel_smoothing(
    dataset: &Dataset,
    bandwidth_scales: Option<Vec<Real>>,
    clamp: (Real, Real),
) -> Result<RatioModel> {
    if dataset.dim() > 10 {
        eprintln!(
            "warning: kernel smoothing in {} dimensions is unlikely to be meaningful",
            dataset.dim()
        );
    }
    let scales = bandwidth_scales.unwrap_or_else(default_bandwidth_scales);
    if scales.is_empty() || scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::Config("bandwidth scales must be positive".into()));
    }
    let source = dataset.source_x().to_owned();
    let target = dataset.target_x().to_owned();
    let h_source = select_bandwidth(&source, &scales)?;
    let h_target = select_bandwidth(&target, &scales)?;
    let model = KernelRatio { source, target, h_source, h_target };
    Ok(RatioModel {
        backend: RatioBackend::KernelSmoothing { model },
        clamp_min: clamp.0,
        clamp_max: clamp.1,
        objective_value: None,
        divergence_estimate: None,
        divergence: None,
    })
}

/// 20 log-spaced multipliers around Silverman's rule.
pub fn default_bandwidth_scales() -> Vec<Real> {
    let lo: Real = 0.25;
    let hi: Real = 4.0;
    let k = 20;
    (0..k)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as Real / (k - 1) as Real).exp())
        .collect()
}

/// Probabilistic-classification baseline: a logistic model on degree-2 sieve
/// features for P(delta = 1 | x), converted through the Bayes identity
/// `r(x) = {(1 - tau)/tau} pi(x) / (1 - pi(x))`.
pub fn fit_prob_classification(dataset: &Dataset, clamp: (Real, Real)) -> Result<RatioModel> {
    let pooled = dataset.pooled_x();
    let basis = PolyBasis::<Real>::build(pooled.view(), 2);
    let features = basis.matrix(pooled.view());
    let n = dataset.n();
    let total = dataset.len();
    let labels: Vec<Real> = (0..total).map(|i| if i < n { 0.0 } else { 1.0 }).collect();
    let beta = fit_logistic(&features, &labels)?;
    let model = LogisticRatio { basis, beta, tau_hat: dataset.tau_hat() };
    Ok(RatioModel {
        backend: RatioBackend::Classifier { model },
        clamp_min: clamp.0,
        clamp_max: clamp.1,
        objective_value: None,
        divergence_estimate: None,
        divergence: None,
    })
}

/// Empirical L2 error of a ratio fit against an oracle over the given rows:
/// the square root of the mean squared deviation.
pub fn empirical_l2_error(
    r_hat: &RatioModel,
    oracle: &RatioOracle,
    x_all: ArrayView2<'_, Real>,
) -> Result<Real> {
    Ok(empirical_mse(r_hat, oracle, x_all)?.sqrt())
}

/// Unrooted mean squared error over the given rows; the metric the simulation
/// tables report on source rows.
pub fn empirical_mse(
    r_hat: &RatioModel,
    oracle: &RatioOracle,
    x: ArrayView2<'_, Real>,
) -> Result<Real> {
    let fitted = r_hat.evaluate(x)?;
    let truth = oracle.evaluate(x)?;
    let n = x.nrows() as Real;
    Ok(fitted.iter().zip(truth.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<Real>() / n)
}

// ---------------------------------------------------------------------------
// Kernel smoothing internals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelRatio {
    source: Array2<Real>,
    target: Array2<Real>,
    h_source: Vec<Real>,
    h_target: Vec<Real>,
}

impl KernelRatio {
    fn evaluate(&self, x: ArrayView2<'_, Real>) -> Result<Array1<Real>> {
        let d = self.source.ncols();
        if x.ncols() != d {
            return Err(Error::Shape(format!("ratio expects {d} covariates, got {}", x.ncols())));
        }
        let mut out = Array1::zeros(x.nrows());
        let mut row_buf = vec![0.0; d];
        for (i, row) in x.rows().into_iter().enumerate() {
            for (b, v) in row_buf.iter_mut().zip(row.iter()) {
                *b = *v;
            }
            let lp = log_kde(&self.source, &self.h_source, &row_buf);
            let lq = log_kde(&self.target, &self.h_target, &row_buf);
            out[i] = if !lp.is_finite() {
                // Denominator underflow: far outside the source support.
                Real::INFINITY
            } else if !lq.is_finite() {
                0.0
            } else {
                (lq - lp).exp()
            };
        }
        Ok(out)
    }
}

fn log_kde(sample: &Array2<Real>, h: &[Real], x: &[Real]) -> Real {
    let k = sample.nrows();
    let d = sample.ncols();
    let mut max_neg = Real::NEG_INFINITY;
    let mut dist = vec![0.0; k];
    for (j, row) in sample.rows().into_iter().enumerate() {
        let mut q = 0.0;
        for c in 0..d {
            let z = (x[c] - row[c]) / h[c];
            q += z * z;
        }
        let v = -0.5 * q;
        dist[j] = v;
        if v > max_neg {
            max_neg = v;
        }
    }
    if max_neg < -700.0 {
        return Real::NEG_INFINITY;
    }
    let sum: Real = dist.iter().map(|v| (v - max_neg).exp()).sum();
    let log_norm = (k as Real).ln()
        + h.iter().map(|v| v.ln()).sum::<Real>()
        + 0.5 * d as Real * (2.0 * std::f64::consts::PI).ln();
    max_neg + sum.ln() - log_norm
}

fn column_sd(x: &Array2<Real>) -> Vec<Real> {
    let n = x.nrows() as Real;
    (0..x.ncols())
        .map(|j| {
            let col = x.column(j);
            let mean = col.sum() / n;
            (col.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / n).sqrt()
        })
        .collect()
}

fn silverman_base(x: &Array2<Real>) -> Result<Vec<Real>> {
    let k = x.nrows() as Real;
    let d = x.ncols() as Real;
    let factor = (4.0 / ((d + 2.0) * k)).powf(1.0 / (d + 4.0));
    column_sd(x)
        .into_iter()
        .enumerate()
        .map(|(j, sd)| {
            if sd <= 0.0 || !sd.is_finite() {
                Err(Error::Numeric(format!(
                    "degenerate bandwidth: column {} has zero variance",
                    j + 1
                )))
            } else {
                Ok(sd * factor)
            }
        })
        .collect()
}

/// Pick the bandwidth scale by leave-one-out log-likelihood, exact when the
/// sample has at most 2000 rows and 5-fold cross-validation otherwise.
fn select_bandwidth(x: &Array2<Real>, scales: &[Real]) -> Result<Vec<Real>> {
    let base = silverman_base(x)?;
    let k = x.nrows();
    let mut best_scale = scales[0];
    let mut best_score = Real::NEG_INFINITY;
    if k <= 2000 {
        // Pairwise quadratic forms at the base bandwidth are shared by every
        // scale: scaling by s divides each term by s^2.
        let d = x.ncols();
        let mut quad = vec![0.0; k * k];
        for i in 0..k {
            for j in (i + 1)..k {
                let mut q = 0.0;
                for c in 0..d {
                    let z = (x[(i, c)] - x[(j, c)]) / base[c];
                    q += z * z;
                }
                quad[i * k + j] = q;
                quad[j * k + i] = q;
            }
        }
        for &s in scales {
            let inv2 = 0.5 / (s * s);
            let log_norm = ((k - 1) as Real).ln()
                + base.iter().map(|h| (h * s).ln()).sum::<Real>()
                + 0.5 * d as Real * (2.0 * std::f64::consts::PI).ln();
            let mut score = 0.0;
            for i in 0..k {
                let mut max_neg = Real::NEG_INFINITY;
                for j in 0..k {
                    if j == i {
                        continue;
                    }
                    let v = -quad[i * k + j] * inv2;
                    if v > max_neg {
                        max_neg = v;
                    }
                }
                if max_neg < -700.0 {
                    score = Real::NEG_INFINITY;
                    break;
                }
                let mut sum = 0.0;
                for j in 0..k {
                    if j == i {
                        continue;
                    }
                    sum += (-quad[i * k + j] * inv2 - max_neg).exp();
                }
                score += max_neg + sum.ln() - log_norm;
            }
            if score > best_score {
                best_score = score;
                best_scale = s;
            }
        }
    } else {
        let folds = 5usize;
        for &s in scales {
            let h: Vec<Real> = base.iter().map(|b| b * s).collect();
            let mut score = 0.0;
            for f in 0..folds {
                let lo = f * k / folds;
                let hi = (f + 1) * k / folds;
                let train = remove_rows(x, lo, hi);
                for i in lo..hi {
                    let row: Vec<Real> = x.row(i).to_vec();
                    let v = log_kde(&train, &h, &row);
                    score += if v.is_finite() { v } else { -1e10 };
                }
            }
            if score > best_score {
                best_score = score;
                best_scale = s;
            }
        }
    }
    Ok(base.into_iter().map(|b| b * best_scale).collect())
}

fn remove_rows(x: &Array2<Real>, lo: usize, hi: usize) -> Array2<Real> {
    let k = x.nrows();
    let mut out = Array2::zeros((k - (hi - lo), x.ncols()));
    let mut r = 0;
    for i in 0..k {
        if i >= lo && i < hi {
            continue;
        }
        out.row_mut(r).assign(&x.row(i));
        r += 1;
    }
    out
}

// ---------------------------------------------------------------------------
// Probabilistic classification internals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticRatio {
    basis: PolyBasis<Real>,
    beta: Vec<Real>,
    tau_hat: Real,
}

impl LogisticRatio {
    fn evaluate(&self, x: ArrayView2<'_, Real>) -> Result<Array1<Real>> {
        let b = self.basis.matrix(x);
        let beta = Array1::from_vec(self.beta.clone());
        let eta = b.dot(&beta);
        let prior = (1.0 - self.tau_hat) / self.tau_hat;
        // r(x) = {(1 - tau)/tau} pi/(1 - pi) = {(1 - tau)/tau} exp(eta).
        Ok(eta.mapv(|e| prior * e.exp()))
    }
}

fn fit_logistic(features: &Array2<Real>, labels: &[Real]) -> Result<Vec<Real>> {
    let (n, q) = (features.nrows(), features.ncols());
    let mut beta = Array1::<Real>::zeros(q);
    let ridge = 1e-8;
    for _iter in 0..100 {
        let eta = features.dot(&beta);
        let mut grad = Array1::<Real>::zeros(q);
        let mut hess = Array2::<Real>::zeros((q, q));
        for i in 0..n {
            let p = 1.0 / (1.0 + (-eta[i]).exp());
            let w = (p * (1.0 - p)).max(1e-12);
            let resid = labels[i] - p;
            let row = features.row(i);
            for a in 0..q {
                grad[a] += row[a] * resid;
                for b in a..q {
                    hess[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..q {
            hess[(a, a)] += ridge;
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        let step = crate::linalg::spd_solve(&hess, &grad)
            .map_err(|_| Error::Numeric("logistic fit: singular information matrix".into()))?;
        let step_norm: Real = step.iter().map(|v| v * v).sum::<Real>().sqrt();
        beta += &step;
        if !beta.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(
                "probabilistic classification diverged (perfect separation?); \
                 use stronger clamping or the DDR estimator"
                    .into(),
            ));
        }
        if step_norm < 1e-8 {
            break;
        }
    }
    let eta = features.dot(&beta);
    if eta.iter().any(|e| e.abs() > 30.0) {
        return Err(Error::Numeric(
            "probabilistic classification found (near-)perfect separation; \
             use stronger clamping or the DDR estimator"
                .into(),
        ));
    }
    Ok(beta.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{stream_rng, CovariateSetting, ResponseModel, SampleRole, ScenarioConfig};
    use crate::divergence::DivergenceId;
    use ndarray::Array2;
    use rand::Rng;

    fn kl_spec() -> DivergenceSpec<Real> {
        DivergenceSpec::new(DivergenceId::Kl)
    }

    fn fast_mlp() -> FunctionClassConfig {
        let mut cfg = FunctionClassConfig::mlp_default();
        cfg.degree_or_width_candidates = vec![16];
        cfg.depth_candidates = vec![1];
        cfg.optimizer.max_epochs = 600;
        cfg
    }

    fn deep_mlp() -> FunctionClassConfig {
        let mut cfg = fast_mlp();
        cfg.depth_candidates = vec![2];
        cfg.optimizer.max_epochs = 2000;
        cfg
    }

    fn same_law_dataset(n: usize, m: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = stream_rng(seed, 0);
        let sx = Array2::from_shape_fn((n, d), |_| rng.gen::<Real>());
        let tx = Array2::from_shape_fn((m, d), |_| rng.gen::<Real>());
        let sy = ndarray::Array1::from_shape_fn(n, |_| rng.gen::<Real>());
        Dataset::new(sx, sy, tx).unwrap()
    }

    fn beta21_dataset(n: usize, m: usize, seed: u64) -> Dataset {
        let mut rng = stream_rng(seed, 0);
        let sx = Array2::from_shape_fn((n, 1), |_| rng.gen::<Real>());
        let tx = Array2::from_shape_fn((m, 1), |_| rng.gen::<Real>().sqrt());
        let sy = ndarray::Array1::from_shape_fn(n, |_| rng.gen::<Real>());
        Dataset::new(sx, sy, tx).unwrap()
    }

    #[test]
    fn ddr_close_to_one_when_no_shift() {
        let ds = same_law_dataset(2000, 1000, 2, 7);
        let model = fit_ddr(&ds, &kl_spec(), &fast_mlp(), &mut stream_rng(1, 0)).unwrap();
        let mse = empirical_mse(&model, &RatioOracle::Unit, ds.pooled_x().view()).unwrap();
        assert!(mse < 0.05, "MSE against r0 = 1 was {mse}");
        let d_hat = model.divergence_estimate.unwrap();
        assert!(d_hat.abs() < 0.05, "divergence at P = Q was {d_hat}");
    }

    #[test]
    fn ddr_recovers_linear_ratio() {
        let ds = beta21_dataset(5000, 2500, 17);
        let model = fit_ddr(&ds, &kl_spec(), &deep_mlp(), &mut stream_rng(2, 0)).unwrap();
        let err =
            empirical_l2_error(&model, &RatioOracle::LinearBeta21, ds.pooled_x().view()).unwrap();
        assert!(err < 0.15, "empirical L2 error vs 2x was {err}");
    }

    #[test]
    fn ddr_divergence_estimate_matches_quadrature_oracle() {
        // KL divergence of Beta(6/5,6/5) against Uniform(0,1) via Simpson
        // quadrature of q log q on [0,1].
        let grid = 20001usize;
        let mut quad = 0.0;
        for i in 0..grid {
            let x = i as f64 / (grid - 1) as f64;
            let q = crate::data::beta65_pdf(x);
            let f = if q > 0.0 { q * q.ln() } else { 0.0 };
            let w = if i == 0 || i == grid - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            quad += w * f;
        }
        quad /= 3.0 * (grid - 1) as f64;

        let scenario = ScenarioConfig::new(CovariateSetting::S1, ResponseModel::M1, 20000, 1, 5);
        let ds = scenario.generate().unwrap();
        let model = fit_ddr(&ds, &kl_spec(), &fast_mlp(), &mut stream_rng(3, 0)).unwrap();
        let d_hat = model.divergence_estimate.unwrap();
        assert!(d_hat > 0.0, "divergence should be positive, got {d_hat}");
        assert!((d_hat - quad).abs() < 0.05, "estimate {d_hat} vs quadrature {quad}");
    }

    #[test]
    fn kernel_smoothing_near_one_without_shift() {
        let ds = same_law_dataset(1500, 800, 1, 27);
        let model = fit_kernel_smoothing(&ds, None, (0.01, 100.0)).unwrap();
        let mse = empirical_mse(&model, &RatioOracle::Unit, ds.pooled_x().view()).unwrap();
        assert!(mse < 0.1, "KS MSE at P = Q was {mse}");
    }

    #[test]
    fn kernel_smoothing_clamps_far_points() {
        let ds = same_law_dataset(300, 200, 1, 37);
        let model = fit_kernel_smoothing(&ds, None, (0.01, 100.0)).unwrap();
        let far = ndarray::array![[1.0e4]];
        let v = model.evaluate(far.view()).unwrap();
        assert_eq!(v[0], 100.0);
    }

    #[test]
    fn kernel_smoothing_rejects_constant_column() {
        let n = 50;
        let sx = Array2::from_elem((n, 1), 0.5);
        let tx = Array2::from_elem((n, 1), 0.5);
        let sy = ndarray::Array1::zeros(n);
        let ds = Dataset::new(sx, sy, tx).unwrap();
        let err = fit_kernel_smoothing(&ds, None, (0.01, 100.0)).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn classification_bayes_identity() {
        // beta = 0 gives pi = 1/2 everywhere; with tau = 1/3 that is r = 2.
        let ds = same_law_dataset(100, 50, 1, 47);
        let basis = PolyBasis::<Real>::build(ds.pooled_x().view(), 2);
        let q = basis.len();
        let model = LogisticRatio { basis, beta: vec![0.0; q], tau_hat: 1.0 / 3.0 };
        let v = model.evaluate(ds.pooled_x().view()).unwrap();
        assert!(v.iter().all(|&r| (r - 2.0).abs() < 1e-12));
    }

    #[test]
    fn classification_near_one_without_shift() {
        let ds = same_law_dataset(2000, 1000, 2, 57);
        let model = fit_prob_classification(&ds, (0.01, 100.0)).unwrap();
        let mse = empirical_mse(&model, &RatioOracle::Unit, ds.pooled_x().view()).unwrap();
        assert!(mse < 0.05, "PC MSE at P = Q was {mse}");
    }

    #[test]
    fn classification_detects_separation() {
        // Source on [0, 1], target on [3, 4]: perfectly separable.
        let mut rng = stream_rng(67, 0);
        let sx = Array2::from_shape_fn((120, 1), |_| rng.gen::<Real>());
        let tx = Array2::from_shape_fn((120, 1), |_| 3.0 + rng.gen::<Real>());
        let sy = ndarray::Array1::zeros(120);
        let ds = Dataset::new(sx, sy, tx).unwrap();
        let err = fit_prob_classification(&ds, (0.01, 100.0)).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "got {err:?}");
    }

    #[test]
    fn oracle_error_metrics() {
        let scenario = ScenarioConfig::new(CovariateSetting::S1, ResponseModel::M1, 200, 2, 77);
        let ds = scenario.generate().unwrap();
        let oracle = RatioOracle::S1Beta { d: 2 };
        let model = RatioModel::from_oracle(oracle.clone());
        let x = ds.pooled_x();
        assert_eq!(empirical_l2_error(&model, &oracle, x.view()).unwrap(), 0.0);

        // r = 1 against r0 = 2x evaluated at x = 1 is a constant unit shift.
        let base = RatioModel::from_oracle(RatioOracle::Unit);
        let x1 = Array2::from_elem((64, 1), 1.0);
        let e = empirical_l2_error(&base, &RatioOracle::LinearBeta21, x1.view()).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_model_json_round_trips() {
        let ds = beta21_dataset(300, 150, 87);
        let mut cfg = fast_mlp();
        cfg.optimizer.max_epochs = 50;
        let model = fit_ddr(&ds, &kl_spec(), &cfg, &mut stream_rng(4, 0)).unwrap();
        let back = RatioModel::from_json(&model.to_json()).unwrap();
        let x = ds.pooled_x();
        assert_eq!(model.evaluate(x.view()).unwrap(), back.evaluate(x.view()).unwrap());
    }

    #[test]
    fn s1_target_covariates_have_beta_mean() {
        let mut rng = stream_rng(97, 0);
        let x = crate::data::generate_covariates(
            CovariateSetting::S1,
            SampleRole::Target,
            40000,
            1,
            &mut rng,
        )
        .unwrap();
        let mean = x.sum() / 40000.0;
        assert!((mean - 0.5).abs() < 0.01, "Beta(6/5,6/5) mean was {mean}");
    }
}
