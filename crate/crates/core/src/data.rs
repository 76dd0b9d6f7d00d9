//! Datasets, synthetic data generators for the simulation designs, closed-form
//! density-ratio oracles, and CSV ingestion.
//!
//! A [`Dataset`] combines `n` fully observed source rows `(x, y)` with `m`
//! covariate-only target rows. The mixing proportion `tau_hat = m / (n + m)`
//! is fixed at construction and never re-estimated.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg;

/// RNG stream derived from a master seed. Independent work units (replications,
/// bootstrap resamples, imputation rows) take distinct stream numbers so they
/// can run in any order without sharing state.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Covariate design: compact support (S1) or Gaussian (S2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateSetting {
    /// Source Uniform(0,1)^d, target Beta(6/5, 6/5)^d, independent coordinates.
    S1,
    /// Source N(0, I_d), target N(0, Sigma) with Sigma_ij = 0.5^|i-j|.
    S2,
}

/// Response model: linear alternating-sign sum, trigonometric, or indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseModel {
    M1,
    M2,
    M3,
}

/// Which of the two samples a draw belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleRole {
    Source,
    Target,
}

/// One simulation scenario: covariate design, response model, sizes, seed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub covariate_setting: CovariateSetting,
    pub response_model: ResponseModel,
    pub n: usize,
    /// Target sample size; defaults to n/2 when absent.
    #[serde(default)]
    pub m: Option<usize>,
    pub d: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(
        covariate_setting: CovariateSetting,
        response_model: ResponseModel,
        n: usize,
        d: usize,
        seed: u64,
    ) -> Self {
        Self { covariate_setting, response_model, n, m: None, d, seed }
    }

    pub fn target_size(&self) -> usize {
        self.m.unwrap_or(self.n / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("covariate dimension d must be at least 1".into()));
        }
        if self.n == 0 || self.target_size() == 0 {
            return Err(Error::Config("both samples must be non-empty".into()));
        }
        Ok(())
    }

    /// Draw a dataset from this scenario with the given stream.
    pub fn generate_with(&self, rng: &mut ChaCha8Rng) -> Result<Dataset> {
        self.validate()?;
        let m = self.target_size();
        let source_x =
            generate_covariates(self.covariate_setting, SampleRole::Source, self.n, self.d, rng)?;
        let target_x =
            generate_covariates(self.covariate_setting, SampleRole::Target, m, self.d, rng)?;
        let mut source_y = Array1::zeros(self.n);
        for i in 0..self.n {
            source_y[i] = generate_response(source_x.row(i), self.response_model, rng);
        }
        Dataset::new(source_x, source_y, target_x)
    }

    /// Draw a dataset using the scenario's own seed.
    pub fn generate(&self) -> Result<Dataset> {
        self.generate_with(&mut stream_rng(self.seed, 0))
    }
}

/// Combined source and target samples.
///
/// Immutable after construction; pooled row order is source rows first, then
/// target rows, everywhere in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    source_x: Array2<f64>,
    source_y: Array1<f64>,
    target_x: Array2<f64>,
}

impl Dataset {
    pub fn new(source_x: Array2<f64>, source_y: Array1<f64>, target_x: Array2<f64>) -> Result<Self> {
        if source_x.nrows() == 0 || target_x.nrows() == 0 {
            return Err(Error::Config("both samples must be non-empty".into()));
        }
        if source_x.ncols() != target_x.ncols() {
            return Err(Error::Shape(format!(
                "source has {} covariate columns, target has {}",
                source_x.ncols(),
                target_x.ncols()
            )));
        }
        if source_y.len() != source_x.nrows() {
            return Err(Error::Shape(format!(
                "{} source rows but {} responses",
                source_x.nrows(),
                source_y.len()
            )));
        }
        let finite = source_x.iter().chain(target_x.iter()).chain(source_y.iter());
        for v in finite {
            if !v.is_finite() {
                return Err(Error::Config("non-finite value in dataset".into()));
            }
        }
        Ok(Self { source_x, source_y, target_x })
    }

    pub fn n(&self) -> usize {
        self.source_x.nrows()
    }

    pub fn m(&self) -> usize {
        self.target_x.nrows()
    }

    /// Total number of rows N = n + m.
    pub fn len(&self) -> usize {
        self.n() + self.m()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.source_x.ncols()
    }

    /// Mixing proportion m / (n + m).
    pub fn tau_hat(&self) -> f64 {
        self.m() as f64 / self.len() as f64
    }

    pub fn source_x(&self) -> ArrayView2<'_, f64> {
        self.source_x.view()
    }

    pub fn source_y(&self) -> ArrayView1<'_, f64> {
        self.source_y.view()
    }

    pub fn target_x(&self) -> ArrayView2<'_, f64> {
        self.target_x.view()
    }

    /// All covariate rows, source first then target.
    pub fn pooled_x(&self) -> Array2<f64> {
        ndarray::concatenate(Axis(0), &[self.source_x.view(), self.target_x.view()])
            .expect("matching column counts")
    }

    /// Bootstrap resample: source and target rows drawn independently with
    /// replacement, preserving n and m.
    pub fn resample(&self, rng: &mut ChaCha8Rng) -> Dataset {
        let n = self.n();
        let m = self.m();
        let d = self.dim();
        let mut sx = Array2::zeros((n, d));
        let mut sy = Array1::zeros(n);
        for i in 0..n {
            let j = rng.gen_range(0..n);
            sx.row_mut(i).assign(&self.source_x.row(j));
            sy[i] = self.source_y[j];
        }
        let mut tx = Array2::zeros((m, d));
        for i in 0..m {
            let j = rng.gen_range(0..m);
            tx.row_mut(i).assign(&self.target_x.row(j));
        }
        Dataset { source_x: sx, source_y: sy, target_x: tx }
    }
}

/// Sample covariates for one role of one setting.
///
/// S1 source rows are i.i.d. Uniform(0,1)^d and S1 target rows i.i.d.
/// Beta(6/5, 6/5)^d, each Beta draw built from two Gamma(6/5) variates.
/// S2 source rows are N(0, I_d); S2 target rows are N(0, Sigma) sampled
/// through the Cholesky factor of Sigma_ij = 0.5^|i-j|.
pub fn generate_covariates(
    setting: CovariateSetting,
    role: SampleRole,
    n: usize,
    d: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<f64>> {
    if n == 0 || d == 0 {
        return Err(Error::Config("sample size and dimension must be positive".into()));
    }
    let mut x = Array2::zeros((n, d));
    match (setting, role) {
        (CovariateSetting::S1, SampleRole::Source) => {
            for v in x.iter_mut() {
                *v = rng.gen::<f64>();
            }
        }
        (CovariateSetting::S1, SampleRole::Target) => {
            let gamma = Gamma::new(BETA_SHAPE, 1.0).expect("valid shape");
            for v in x.iter_mut() {
                let g1 = gamma.sample(rng);
                let g2 = gamma.sample(rng);
                *v = g1 / (g1 + g2);
            }
        }
        (CovariateSetting::S2, SampleRole::Source) => {
            for v in x.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        }
        (CovariateSetting::S2, SampleRole::Target) => {
            let chol = ar1_cholesky(d);
            let mut z = vec![0.0; d];
            for mut row in x.rows_mut() {
                for zj in z.iter_mut() {
                    *zj = rng.sample(StandardNormal);
                }
                for j in 0..d {
                    let mut acc = 0.0;
                    for (k, zk) in z.iter().enumerate().take(j + 1) {
                        acc += chol[(j, k)] * zk;
                    }
                    row[j] = acc;
                }
            }
        }
    }
    Ok(x)
}

const BETA_SHAPE: f64 = 6.0 / 5.0;

/// AR(1) correlation matrix Sigma_ij = 0.5^|i-j|.
pub fn ar1_correlation(d: usize) -> Array2<f64> {
    Array2::from_shape_fn((d, d), |(i, j)| 0.5f64.powi((i as i32 - j as i32).abs()))
}

fn ar1_cholesky(d: usize) -> Array2<f64> {
    linalg::cholesky(&ar1_correlation(d)).expect("AR(1) correlation is positive definite")
}

/// Regression function of the response models, without noise.
pub fn regression_value(x: ArrayView1<'_, f64>, model: ResponseModel) -> f64 {
    let half = x.len() / 2;
    // 1-based positions: even positions 2k, odd positions 2k-1, k = 1..=d/2.
    let even: f64 = (1..=half).map(|k| x[2 * k - 1]).sum();
    let odd: f64 = (1..=half).map(|k| x[2 * k - 2]).sum();
    match model {
        ResponseModel::M1 => 0.5 * even - 0.5 * odd,
        ResponseModel::M2 => (std::f64::consts::PI * even).sin(),
        ResponseModel::M3 => {
            if even < odd {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Heteroskedastic noise standard deviation: variance max(0.5, |x_1|).
pub fn noise_sd(x: ArrayView1<'_, f64>) -> f64 {
    x[0].abs().max(0.5).sqrt()
}

/// Draw one response: regression value plus centered Gaussian noise.
pub fn generate_response(x: ArrayView1<'_, f64>, model: ResponseModel, rng: &mut ChaCha8Rng) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    regression_value(x, model) + noise_sd(x) * z
}

fn ln_beta_const() -> f64 {
    static LN_BETA: OnceLock<f64> = OnceLock::new();
    *LN_BETA.get_or_init(|| statrs::function::beta::ln_beta(BETA_SHAPE, BETA_SHAPE))
}

/// Beta(6/5, 6/5) density on [0,1].
pub fn beta65_pdf(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    if x == 0.0 || x == 1.0 {
        return 0.0;
    }
    ((BETA_SHAPE - 1.0) * x.ln() + (BETA_SHAPE - 1.0) * (1.0 - x).ln() - ln_beta_const()).exp()
}

/// Closed-form target/source density ratio for setting S1: the product of
/// Beta(6/5, 6/5) densities over coordinates (the source density is 1 on the
/// unit cube).
pub fn true_density_ratio_s1(x: ArrayView1<'_, f64>) -> Result<f64> {
    let mut r = 1.0;
    for &xi in x.iter() {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::Domain(format!(
                "S1 density ratio requested at {xi}, outside the unit cube"
            )));
        }
        r *= beta65_pdf(xi);
    }
    Ok(r)
}

/// Closed-form density-ratio oracles used for evaluation and for the
/// true-nuisance estimator variants.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RatioOracle {
    /// r0 = 1 (no shift).
    Unit,
    /// Setting S1: product of Beta(6/5, 6/5) densities.
    S1Beta { d: usize },
    /// Setting S2: Gaussian ratio with precomputed quadratic form.
    S2Gaussian {
        d: usize,
        /// Row-major (Sigma^-1 - I).
        inv_minus_eye: Vec<f64>,
        /// -0.5 * log det(Sigma).
        neg_half_logdet: f64,
    },
    /// Source Uniform(0,1), target Beta(2,1): r0(x) = 2x at d = 1.
    LinearBeta21,
}

impl RatioOracle {
    pub fn for_setting(setting: CovariateSetting, d: usize) -> Self {
        match setting {
            CovariateSetting::S1 => RatioOracle::S1Beta { d },
            CovariateSetting::S2 => Self::s2_gaussian(d),
        }
    }

    pub fn s2_gaussian(d: usize) -> Self {
        let sigma = ar1_correlation(d);
        let chol = linalg::cholesky(&sigma).expect("positive definite");
        let logdet: f64 = 2.0 * (0..d).map(|i| chol[(i, i)].ln()).sum::<f64>();
        let inv = linalg::spd_inverse(&sigma).expect("positive definite");
        let mut inv_minus_eye = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                inv_minus_eye.push(inv[(i, j)] - if i == j { 1.0 } else { 0.0 });
            }
        }
        RatioOracle::S2Gaussian { d, inv_minus_eye, neg_half_logdet: -0.5 * logdet }
    }

    pub fn evaluate_row(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        match self {
            RatioOracle::Unit => Ok(1.0),
            RatioOracle::S1Beta { d } => {
                check_dim(x.len(), *d)?;
                true_density_ratio_s1(x)
            }
            RatioOracle::S2Gaussian { d, inv_minus_eye, neg_half_logdet } => {
                check_dim(x.len(), *d)?;
                let mut quad = 0.0;
                for i in 0..*d {
                    let mut acc = 0.0;
                    for j in 0..*d {
                        acc += inv_minus_eye[i * d + j] * x[j];
                    }
                    quad += x[i] * acc;
                }
                Ok((neg_half_logdet - 0.5 * quad).exp())
            }
            RatioOracle::LinearBeta21 => {
                check_dim(x.len(), 1)?;
                if !(0.0..=1.0).contains(&x[0]) {
                    return Err(Error::Domain(format!(
                        "Beta(2,1) ratio requested at {}, outside [0,1]",
                        x[0]
                    )));
                }
                Ok(2.0 * x[0])
            }
        }
    }

    pub fn evaluate(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(x.nrows());
        for (i, row) in x.rows().into_iter().enumerate() {
            out[i] = self.evaluate_row(row)?;
        }
        Ok(out)
    }
}

fn check_dim(got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("oracle expects {want} covariates, got {got}")));
    }
    Ok(())
}

/// Read a dataset from CSV with header `x1..xd`, optional `y`, and
/// `role` in {source, target}. Missing responses are an empty field or `NA`.
pub fn load_csv(path: &std::path::Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { row: 0, msg: format!("bad header: {e}") })?
        .clone();

    let mut x_cols: Vec<(usize, usize)> = Vec::new(); // (covariate index, column position)
    let mut y_col = None;
    let mut role_col = None;
    for (pos, name) in headers.iter().enumerate() {
        let lower = name.to_ascii_lowercase();
        if lower == "y" {
            y_col = Some(pos);
        } else if lower == "role" {
            role_col = Some(pos);
        } else if let Some(idx) = lower.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            x_cols.push((idx, pos));
        } else {
            return Err(Error::Parse { row: 0, msg: format!("unrecognized column `{name}`") });
        }
    }
    x_cols.sort_unstable();
    let d = x_cols.len();
    if d == 0 {
        return Err(Error::Config("no covariate columns x1..xd found".into()));
    }
    for (expect, (idx, _)) in x_cols.iter().enumerate() {
        if *idx != expect + 1 {
            return Err(Error::Config(format!(
                "covariate columns must be x1..x{d} with no gaps; missing x{}",
                expect + 1
            )));
        }
    }
    let role_col =
        role_col.ok_or_else(|| Error::Config("missing required `role` column".into()))?;
    let y_col = y_col.ok_or_else(|| Error::Config("missing required `y` column".into()))?;

    let mut source_rows: Vec<f64> = Vec::new();
    let mut source_y: Vec<f64> = Vec::new();
    let mut target_rows: Vec<f64> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let row = line + 1; // 1-based data row for messages
        let record = record.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        let mut xs = Vec::with_capacity(d);
        for &(idx, pos) in &x_cols {
            let field = record.get(pos).unwrap_or("");
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                msg: format!("covariate x{idx} is not a number: `{field}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, msg: format!("covariate x{idx} is not finite") });
            }
            xs.push(v);
        }
        let y_field = record.get(y_col).unwrap_or("");
        let y_missing = y_field.is_empty() || y_field.eq_ignore_ascii_case("na");
        match record.get(role_col).unwrap_or("") {
            r if r.eq_ignore_ascii_case("source") => {
                if y_missing {
                    return Err(Error::Parse { row, msg: "source row has no response".into() });
                }
                let y: f64 = y_field.parse().map_err(|_| Error::Parse {
                    row,
                    msg: format!("response is not a number: `{y_field}`"),
                })?;
                if !y.is_finite() {
                    return Err(Error::Parse { row, msg: "response is not finite".into() });
                }
                source_rows.extend_from_slice(&xs);
                source_y.push(y);
            }
            r if r.eq_ignore_ascii_case("target") => {
                if !y_missing {
                    return Err(Error::Parse {
                        row,
                        msg: "target row carries a response; use an empty field or NA".into(),
                    });
                }
                target_rows.extend_from_slice(&xs);
            }
            other => {
                return Err(Error::Parse {
                    row,
                    msg: format!("role must be `source` or `target`, got `{other}`"),
                });
            }
        }
    }
    if source_y.is_empty() {
        return Err(Error::Config("no source rows in file".into()));
    }
    if target_rows.is_empty() {
        return Err(Error::Config("no target rows in file".into()));
    }
    let n = source_y.len();
    let m = target_rows.len() / d;
    Dataset::new(
        Array2::from_shape_vec((n, d), source_rows).expect("row-major source block"),
        Array1::from_vec(source_y),
        Array2::from_shape_vec((m, d), target_rows).expect("row-major target block"),
    )
}

/// Write a dataset in the same CSV schema accepted by [`load_csv`].
pub fn write_csv(dataset: &Dataset, path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    let d = dataset.dim();
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    header.push("role".into());
    w.write_record(&header).map_err(io_err)?;
    for i in 0..dataset.n() {
        let mut rec: Vec<String> =
            dataset.source_x.row(i).iter().map(|v| format!("{v}")).collect();
        rec.push(format!("{}", dataset.source_y[i]));
        rec.push("source".into());
        w.write_record(&rec).map_err(io_err)?;
    }
    for i in 0..dataset.m() {
        let mut rec: Vec<String> =
            dataset.target_x.row(i).iter().map(|v| format!("{v}")).collect();
        rec.push(String::new());
        rec.push("target".into());
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

fn io_err(e: csv::Error) -> Error {
    Error::Numeric(format!("csv write failed: {e}"))
}
