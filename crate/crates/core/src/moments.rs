//! Estimating-function registry and construction of the DRW and orthogonal
//! moment matrices, with variance estimates and an orthogonality diagnostic.
//!
//! With `tau = m/N` the orthogonal moment of an observation is
//!
//! ```text
//! source row:  r(x) {g(z, theta) - m(x, theta)} / (1 - tau)
//! target row:  m(x, theta) / tau
//! ```
//!
//! where `r` is the covariate density ratio and `m(x, theta)` the conditional
//! moment of `g` given `x`. Its population mean vanishes at the true
//! parameter when either nuisance is correct, and perturbing the nuisances
//! around their truth moves the mean only at second order; the diagnostic
//! [`orthogonality_gap`] measures both effects by finite differences.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::conddens::{conditional_moment, ImputationSet};
use crate::data::{noise_sd, regression_value, Dataset, RatioOracle, ResponseModel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::ratio::RatioModel;
use crate::Real;

type CustomEval = Arc<dyn Fn(ArrayView1<'_, Real>, Real, &[Real], &mut [Real]) + Send + Sync>;

/// Shape and evaluator of one estimating function.
#[derive(Clone)]
pub enum EstimandKind {
    /// g = y - theta; smooth, r = p = 1.
    Mean,
    /// g = 1{y <= theta} - alpha; nonsmooth, r = p = 1.
    Quantile { alpha: Real },
    /// Registered through the library API; the CLI does not expose it.
    Custom {
        name: String,
        r: usize,
        p: usize,
        smooth: bool,
        eval: CustomEval,
        /// Row-major r x p jacobian d g / d theta, when analytic.
        jacobian: Option<CustomEval>,
    },
}

/// A vector estimating function g(x, y, theta) identifying the parameter via
/// a target-population moment condition.
#[derive(Clone)]
pub struct EstimatingFunction {
    kind: EstimandKind,
}

impl std::fmt::Debug for EstimatingFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            EstimandKind::Mean => write!(f, "EstimatingFunction(mean)"),
            EstimandKind::Quantile { alpha } => write!(f, "EstimatingFunction(quantile:{alpha})"),
            EstimandKind::Custom { name, r, p, .. } => {
                write!(f, "EstimatingFunction(custom {name}, r={r}, p={p})")
            }
        }
    }
}

impl EstimatingFunction {
    pub fn mean() -> Self {
        Self { kind: EstimandKind::Mean }
    }

    pub fn quantile(alpha: Real) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("quantile level must be in (0,1), got {alpha}")));
        }
        Ok(Self { kind: EstimandKind::Quantile { alpha } })
    }

    pub fn custom(
        name: impl Into<String>,
        r: usize,
        p: usize,
        smooth: bool,
        eval: CustomEval,
        jacobian: Option<CustomEval>,
    ) -> Result<Self> {
        if r < p || p == 0 {
            return Err(Error::Config(format!(
                "moment dimension r = {r} must be at least the parameter dimension p = {p} >= 1"
            )));
        }
        Ok(Self { kind: EstimandKind::Custom { name: name.into(), r, p, smooth, eval, jacobian } })
    }

    /// Parse a CLI estimand: `mean` or `quantile:<alpha>`.
    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if lower == "mean" {
            return Ok(Self::mean());
        }
        if let Some(rest) = lower.strip_prefix("quantile:") {
            let alpha: Real = rest
                .parse()
                .map_err(|_| Error::Config(format!("bad quantile level `{rest}`")))?;
            return Self::quantile(alpha);
        }
        if lower == "median" {
            return Self::quantile(0.5);
        }
        Err(Error::Config(format!(
            "unknown estimand `{s}` (expected mean | median | quantile:<alpha>)"
        )))
    }

    pub fn kind(&self) -> &EstimandKind {
        &self.kind
    }

    pub fn r(&self) -> usize {
        match &self.kind {
            EstimandKind::Mean | EstimandKind::Quantile { .. } => 1,
            EstimandKind::Custom { r, .. } => *r,
        }
    }

    pub fn p(&self) -> usize {
        match &self.kind {
            EstimandKind::Mean | EstimandKind::Quantile { .. } => 1,
            EstimandKind::Custom { p, .. } => *p,
        }
    }

    pub fn is_smooth(&self) -> bool {
        match &self.kind {
            EstimandKind::Mean => true,
            EstimandKind::Quantile { .. } => false,
            EstimandKind::Custom { smooth, .. } => *smooth,
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            EstimandKind::Mean => "mean".into(),
            EstimandKind::Quantile { alpha } => format!("quantile:{alpha}"),
            EstimandKind::Custom { name, .. } => name.clone(),
        }
    }

    pub fn eval_into(&self, x: ArrayView1<'_, Real>, y: Real, theta: &[Real], out: &mut [Real]) {
        match &self.kind {
            EstimandKind::Mean => out[0] = y - theta[0],
            EstimandKind::Quantile { alpha } => {
                out[0] = if y <= theta[0] { 1.0 - alpha } else { -alpha }
            }
            EstimandKind::Custom { eval, .. } => eval(x, y, theta, out),
        }
    }

    /// Analytic jacobian into a row-major r x p buffer; false when only
    /// finite differences are available.
    pub fn jacobian_into(
        &self,
        x: ArrayView1<'_, Real>,
        y: Real,
        theta: &[Real],
        out: &mut [Real],
    ) -> bool {
        match &self.kind {
            EstimandKind::Mean => {
                out[0] = -1.0;
                true
            }
            EstimandKind::Quantile { .. } => false,
            EstimandKind::Custom { jacobian, .. } => match jacobian {
                Some(j) => {
                    j(x, y, theta, out);
                    true
                }
                None => false,
            },
        }
    }
}

/// Which construction produced a moment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    /// n source rows of r(x) g(z, theta).
    Drw,
    /// N rows of the orthogonal construction.
    Orthogonal,
}

/// Per-observation moment values at one parameter value.
#[derive(Debug, Clone)]
pub struct MomentMatrix {
    pub values: Array2<Real>,
    pub kind: MomentKind,
    pub theta: Vec<Real>,
}

impl MomentMatrix {
    fn validate(self) -> Result<Self> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite entry in moment matrix".into()));
        }
        Ok(self)
    }
}

/// Estimating-function values on the source rows, as an n x r matrix.
pub(crate) fn eval_g_rows(
    g: &EstimatingFunction,
    x: ArrayView2<'_, Real>,
    y: ArrayView1<'_, Real>,
    theta: &[Real],
) -> Array2<Real> {
    let n = x.nrows();
    let r = g.r();
    let mut out = Array2::zeros((n, r));
    let mut buf = vec![0.0; r];
    for i in 0..n {
        g.eval_into(x.row(i), y[i], theta, &mut buf);
        for (j, v) in buf.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

/// Density-ratio-weighted moments: n source rows of `r(x_i) g(z_i, theta)`.
pub fn drw_moments(
    dataset: &Dataset,
    r_hat: &RatioModel,
    g: &EstimatingFunction,
    theta: &[Real],
) -> Result<MomentMatrix> {
    let ratio = r_hat.evaluate(dataset.source_x())?;
    let values = assemble_drw(&ratio, dataset, g, theta);
    MomentMatrix { values, kind: MomentKind::Drw, theta: theta.to_vec() }.validate()
}

pub(crate) fn assemble_drw(
    ratio_at_source: &Array1<Real>,
    dataset: &Dataset,
    g: &EstimatingFunction,
    theta: &[Real],
) -> Array2<Real> {
    let mut values = eval_g_rows(g, dataset.source_x(), dataset.source_y(), theta);
    for (i, mut row) in values.rows_mut().into_iter().enumerate() {
        let w = ratio_at_source[i];
        for v in row.iter_mut() {
            *v *= w;
        }
    }
    values
}

/// Orthogonal moments over all N rows, with the imputed conditional moment
/// supplying `m(x, theta)`.
pub fn orthogonal_moments(
    dataset: &Dataset,
    r_hat: &RatioModel,
    imputations: &ImputationSet,
    g: &EstimatingFunction,
    theta: &[Real],
) -> Result<MomentMatrix> {
    let n = dataset.n();
    let total = dataset.len();
    if imputations.draws.nrows() != total {
        return Err(Error::Shape(format!(
            "imputations cover {} rows but the dataset has {total}",
            imputations.draws.nrows()
        )));
    }
    let ratio = r_hat.evaluate(dataset.source_x())?;
    let pooled = dataset.pooled_x();
    let m_all = conditional_moment(imputations, g, pooled.view(), theta)?;
    let values = assemble_orthogonal(&ratio, &m_all, dataset, g, theta)?;
    let _ = n;
    MomentMatrix { values, kind: MomentKind::Orthogonal, theta: theta.to_vec() }.validate()
}

/// Assemble the N x r orthogonal matrix from precomputed parts: ratio values
/// on source rows and conditional moments on all rows (source first).
pub(crate) fn assemble_orthogonal(
    ratio_at_source: &Array1<Real>,
    m_all: &Array2<Real>,
    dataset: &Dataset,
    g: &EstimatingFunction,
    theta: &[Real],
) -> Result<Array2<Real>> {
    let n = dataset.n();
    let total = dataset.len();
    let tau = dataset.tau_hat();
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("tau_hat = {tau} must lie strictly inside (0,1)")));
    }
    let r = g.r();
    let mut values = Array2::zeros((total, r));
    let inv_source = 1.0 / (1.0 - tau);
    let inv_target = 1.0 / tau;
    let mut buf = vec![0.0; r];
    for i in 0..n {
        g.eval_into(dataset.source_x().row(i), dataset.source_y()[i], theta, &mut buf);
        let w = ratio_at_source[i] * inv_source;
        for j in 0..r {
            values[(i, j)] = w * (buf[j] - m_all[(i, j)]);
        }
    }
    for i in n..total {
        for j in 0..r {
            values[(i, j)] = m_all[(i, j)] * inv_target;
        }
    }
    Ok(values)
}

// ---------------------------------------------------------------------------
// Oracle nuisances and the orthogonality diagnostic
// ---------------------------------------------------------------------------

/// Pointwise density-ratio function.
pub type RatioFn = Arc<dyn Fn(ArrayView1<'_, Real>) -> Real + Send + Sync>;
/// Pointwise conditional-moment function (x, theta, out-vector of length r).
pub type CondMomentFn = Arc<dyn Fn(ArrayView1<'_, Real>, &[Real], &mut [Real]) + Send + Sync>;

/// A (ratio, conditional-moment) nuisance pair as plain functions.
#[derive(Clone)]
pub struct NuisancePair {
    pub ratio: RatioFn,
    pub cond_moment: CondMomentFn,
}

/// Bounded perturbation directions for the two nuisance components.
#[derive(Clone, Default)]
pub struct NuisanceDirection {
    pub ratio: Option<RatioFn>,
    pub cond_moment: Option<CondMomentFn>,
}

fn std_normal_cdf(z: Real) -> Real {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Closed-form nuisance truth for a simulation design: the covariate ratio
/// oracle and the conditional moment implied by the Gaussian response model.
pub fn oracle_nuisances(
    ratio: RatioOracle,
    response: ResponseModel,
    g: &EstimatingFunction,
) -> Result<NuisancePair> {
    let ratio_fn: RatioFn = {
        let oracle = ratio;
        Arc::new(move |x| oracle.evaluate_row(x).unwrap_or(Real::NAN))
    };
    let cond: CondMomentFn = match g.kind() {
        EstimandKind::Mean => Arc::new(move |x, theta, out| {
            out[0] = regression_value(x, response) - theta[0];
        }),
        EstimandKind::Quantile { alpha } => {
            let alpha = *alpha;
            Arc::new(move |x, theta, out| {
                let mu = regression_value(x, response);
                let sd = noise_sd(x);
                out[0] = std_normal_cdf((theta[0] - mu) / sd) - alpha;
            })
        }
        EstimandKind::Custom { .. } => {
            return Err(Error::Contract(
                "no closed-form conditional moment for a custom estimating function".into(),
            ))
        }
    };
    Ok(NuisancePair { ratio: ratio_fn, cond_moment: cond })
}

/// Mean of the orthogonal moment over the rows of a dataset with the
/// nuisances supplied as functions.
pub fn mean_orthogonal_moment(
    dataset: &Dataset,
    nuisances: &NuisancePair,
    g: &EstimatingFunction,
    theta: &[Real],
) -> Result<Array1<Real>> {
    let n = dataset.n();
    let total = dataset.len();
    let tau = dataset.tau_hat();
    let r = g.r();
    let mut acc = vec![0.0; r];
    let mut gbuf = vec![0.0; r];
    let mut mbuf = vec![0.0; r];
    let sx = dataset.source_x();
    let sy = dataset.source_y();
    let tx = dataset.target_x();
    for i in 0..n {
        let x = sx.row(i);
        g.eval_into(x, sy[i], theta, &mut gbuf);
        (nuisances.cond_moment)(x, theta, &mut mbuf);
        let w = (nuisances.ratio)(x) / (1.0 - tau);
        for j in 0..r {
            acc[j] += w * (gbuf[j] - mbuf[j]);
        }
    }
    for i in 0..dataset.m() {
        let x = tx.row(i);
        (nuisances.cond_moment)(x, theta, &mut mbuf);
        for j in 0..r {
            acc[j] += mbuf[j] / tau;
        }
    }
    let mut out = Array1::from_vec(acc);
    out.mapv_inplace(|v| v / total as Real);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite mean moment".into()));
    }
    Ok(out)
}

/// Mean of the DRW moment over the source rows with the ratio supplied as a
/// function.
pub fn mean_drw_moment(
    dataset: &Dataset,
    ratio: &RatioFn,
    g: &EstimatingFunction,
    theta: &[Real],
) -> Result<Array1<Real>> {
    let n = dataset.n();
    let r = g.r();
    let mut acc = vec![0.0; r];
    let mut gbuf = vec![0.0; r];
    let sx = dataset.source_x();
    let sy = dataset.source_y();
    for i in 0..n {
        let x = sx.row(i);
        g.eval_into(x, sy[i], theta, &mut gbuf);
        let w = ratio(x);
        for j in 0..r {
            acc[j] += w * gbuf[j];
        }
    }
    let mut out = Array1::from_vec(acc);
    out.mapv_inplace(|v| v / n as Real);
    Ok(out)
}

fn perturbed(eta0: &NuisancePair, h: &NuisanceDirection, s: Real) -> NuisancePair {
    let ratio: RatioFn = match &h.ratio {
        Some(dr) => {
            let base = eta0.ratio.clone();
            let dr = dr.clone();
            Arc::new(move |x| base(x) + s * dr(x))
        }
        None => eta0.ratio.clone(),
    };
    let cond_moment: CondMomentFn = match &h.cond_moment {
        Some(dm) => {
            let base = eta0.cond_moment.clone();
            let dm = dm.clone();
            Arc::new(move |x, theta, out: &mut [Real]| {
                base(x, theta, out);
                let mut bump = vec![0.0; out.len()];
                dm(x, theta, &mut bump);
                for (o, b) in out.iter_mut().zip(bump.iter()) {
                    *o += s * b;
                }
            })
        }
        None => eta0.cond_moment.clone(),
    };
    NuisancePair { ratio, cond_moment }
}

/// Central finite-difference derivative of the Monte-Carlo mean moment along
/// `eta0 + t h`, for the orthogonal moment and for the DRW moment under the
/// ratio component of the same perturbation. Returns the L2 norms of the two
/// derivative vectors.
pub fn orthogonality_gap(
    dataset: &Dataset,
    g: &EstimatingFunction,
    theta0: &[Real],
    eta0: &NuisancePair,
    h: &NuisanceDirection,
    t: Real,
) -> Result<(Real, Real)> {
    if t <= 0.0 {
        return Err(Error::Config(format!("finite-difference step must be positive, got {t}")));
    }
    let plus = mean_orthogonal_moment(dataset, &perturbed(eta0, h, t), g, theta0)?;
    let minus = mean_orthogonal_moment(dataset, &perturbed(eta0, h, -t), g, theta0)?;
    let gap_orthogonal = plus
        .iter()
        .zip(minus.iter())
        .map(|(a, b)| ((a - b) / (2.0 * t)).powi(2))
        .sum::<Real>()
        .sqrt();

    let gap_drw = match &h.ratio {
        None => 0.0,
        Some(_) => {
            let rp = perturbed(eta0, h, t).ratio;
            let rm = perturbed(eta0, h, -t).ratio;
            let plus = mean_drw_moment(dataset, &rp, g, theta0)?;
            let minus = mean_drw_moment(dataset, &rm, g, theta0)?;
            plus.iter()
                .zip(minus.iter())
                .map(|(a, b)| ((a - b) / (2.0 * t)).powi(2))
                .sum::<Real>()
                .sqrt()
        }
    };
    Ok((gap_orthogonal, gap_drw))
}

// ---------------------------------------------------------------------------
// Variance estimation
// ---------------------------------------------------------------------------

/// Plug-in pieces of the sandwich: Gamma (mean jacobian), Omega (second
/// moment), Sigma = (Gamma' Omega^-1 Gamma)^-1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceEstimates {
    pub gamma: Array2<Real>,
    pub omega: Array2<Real>,
    pub sigma: Array2<Real>,
}

/// Finite-difference step for nonsmooth estimating functions: a smoothing
/// bandwidth on the response scale.
pub fn nonsmooth_fd_step(dataset: &Dataset) -> Real {
    let y = dataset.source_y();
    let n = y.len() as Real;
    let mean = y.sum() / n;
    let sd = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / n).sqrt();
    1.06 * sd * (dataset.len() as Real).powf(-0.2)
}

/// Estimate Gamma, Omega, and Sigma at `theta_hat`. The jacobian uses the
/// analytic derivative where the estimating function provides one and a
/// bandwidth-scale central difference of the mean moment otherwise.
pub fn variance_estimates(
    moments: &MomentMatrix,
    g: &EstimatingFunction,
    dataset: &Dataset,
    r_hat: &RatioModel,
    imputations: Option<&ImputationSet>,
    theta_hat: &[Real],
) -> Result<VarianceEstimates> {
    let rows = moments.values.nrows();
    let r = g.r();
    let p = g.p();
    let omega = moments.values.t().dot(&moments.values) / rows as Real;

    let gamma = if g.is_smooth() {
        analytic_gamma(moments.kind, g, dataset, r_hat, imputations, theta_hat)?
    } else {
        fd_gamma(moments.kind, g, dataset, r_hat, imputations, theta_hat)?
    };

    // Sigma = (Gamma' Omega^-1 Gamma)^-1, via two SPD solves.
    let mut omega_inv_gamma = Array2::zeros((r, p));
    for k in 0..p {
        let col = gamma.column(k).to_owned();
        let solved = linalg::spd_solve(&omega, &col).map_err(|_| {
            Error::Numeric(
                "singular moment covariance; collect more data or add a ridge epsilon".into(),
            )
        })?;
        omega_inv_gamma.column_mut(k).assign(&solved);
    }
    let middle = gamma.t().dot(&omega_inv_gamma);
    let sigma = linalg::spd_inverse(&middle).map_err(|_| {
        Error::Numeric("Gamma' Omega^-1 Gamma is singular; the parameter is not identified".into())
    })?;
    Ok(VarianceEstimates { gamma, omega, sigma })
}

fn analytic_gamma(
    kind: MomentKind,
    g: &EstimatingFunction,
    dataset: &Dataset,
    r_hat: &RatioModel,
    imputations: Option<&ImputationSet>,
    theta: &[Real],
) -> Result<Array2<Real>> {
    let r = g.r();
    let p = g.p();
    let n = dataset.n();
    let total = dataset.len();
    let tau = dataset.tau_hat();
    let ratio = r_hat.evaluate(dataset.source_x())?;
    let mut jac = vec![0.0; r * p];
    let mut gamma = Array2::zeros((r, p));

    match kind {
        MomentKind::Drw => {
            let sx = dataset.source_x();
            let sy = dataset.source_y();
            for i in 0..n {
                let x = sx.row(i);
                if !g.jacobian_into(x, sy[i], theta, &mut jac) {
                    return Err(Error::Contract("smooth estimating function lacks a jacobian".into()));
                }
                for a in 0..r {
                    for b in 0..p {
                        gamma[(a, b)] += ratio[i] * jac[a * p + b] / n as Real;
                    }
                }
            }
        }
        MomentKind::Orthogonal => {
            let imputations = imputations.ok_or_else(|| {
                Error::Contract("orthogonal variance estimation needs the imputation set".into())
            })?;
            let pooled = dataset.pooled_x();
            let kappa = imputations.kappa as Real;
            // d m_hat / d theta: average jacobian over each row's draws.
            let mut mjac = Array2::zeros((total, r * p));
            for i in 0..total {
                let x = pooled.row(i);
                let mut acc = vec![0.0; r * p];
                for &y in imputations.draws.row(i).iter() {
                    if !g.jacobian_into(x, y, theta, &mut jac) {
                        return Err(Error::Contract(
                            "smooth estimating function lacks a jacobian".into(),
                        ));
                    }
                    for (a, v) in acc.iter_mut().zip(jac.iter()) {
                        *a += *v;
                    }
                }
                for (k, v) in acc.iter().enumerate() {
                    mjac[(i, k)] = v / kappa;
                }
            }
            let sx = dataset.source_x();
            let sy = dataset.source_y();
            for i in 0..n {
                let x = sx.row(i);
                if !g.jacobian_into(x, sy[i], theta, &mut jac) {
                    return Err(Error::Contract("smooth estimating function lacks a jacobian".into()));
                }
                let w = ratio[i] / (1.0 - tau);
                for a in 0..r {
                    for b in 0..p {
                        gamma[(a, b)] +=
                            w * (jac[a * p + b] - mjac[(i, a * p + b)]) / total as Real;
                    }
                }
            }
            for i in n..total {
                for a in 0..r {
                    for b in 0..p {
                        gamma[(a, b)] += mjac[(i, a * p + b)] / (tau * total as Real);
                    }
                }
            }
        }
    }
    Ok(gamma)
}

fn fd_gamma(
    kind: MomentKind,
    g: &EstimatingFunction,
    dataset: &Dataset,
    r_hat: &RatioModel,
    imputations: Option<&ImputationSet>,
    theta: &[Real],
) -> Result<Array2<Real>> {
    let r = g.r();
    let p = g.p();
    let step = nonsmooth_fd_step(dataset);
    let mean_at = |th: &[Real]| -> Result<Array1<Real>> {
        let mm = match kind {
            MomentKind::Drw => drw_moments(dataset, r_hat, g, th)?,
            MomentKind::Orthogonal => {
                let imp = imputations.ok_or_else(|| {
                    Error::Contract("orthogonal variance estimation needs the imputation set".into())
                })?;
                orthogonal_moments(dataset, r_hat, imp, g, th)?
            }
        };
        let rows = mm.values.nrows() as Real;
        Ok(mm.values.sum_axis(ndarray::Axis(0)) / rows)
    };
    let mut gamma = Array2::zeros((r, p));
    for b in 0..p {
        let mut plus = theta.to_vec();
        plus[b] += step;
        let mut minus = theta.to_vec();
        minus[b] -= step;
        let hi = mean_at(&plus)?;
        let lo = mean_at(&minus)?;
        for a in 0..r {
            gamma[(a, b)] = (hi[a] - lo[a]) / (2.0 * step);
        }
    }
    Ok(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conddens::impute;
    use crate::conddens::CondDensityModel;
    use crate::data::{stream_rng, CovariateSetting, ScenarioConfig};

    fn scenario_dataset(n: usize, seed: u64) -> Dataset {
        ScenarioConfig::new(CovariateSetting::S1, ResponseModel::M2, n, 5, seed)
            .generate()
            .unwrap()
    }

    #[test]
    fn drw_rows_reproduce_their_definition() {
        let ds = scenario_dataset(80, 1);
        let r_hat = RatioModel::from_oracle(RatioOracle::S1Beta { d: 5 });
        let g = EstimatingFunction::mean();
        let theta = [0.3];
        let mm = drw_moments(&ds, &r_hat, &g, &theta).unwrap();
        assert_eq!(mm.values.nrows(), ds.n());
        for i in 0..ds.n() {
            let r0 = crate::data::true_density_ratio_s1(ds.source_x().row(i)).unwrap();
            let expect = r0 * (ds.source_y()[i] - theta[0]);
            assert!((mm.values[(i, 0)] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_ratio_gives_unweighted_rows() {
        let ds = scenario_dataset(50, 2);
        let r_hat = RatioModel::from_oracle(RatioOracle::Unit);
        let g = EstimatingFunction::mean();
        let mm = drw_moments(&ds, &r_hat, &g, &[0.0]).unwrap();
        for i in 0..ds.n() {
            assert!((mm.values[(i, 0)] - ds.source_y()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_rows_reproduce_their_definition() {
        let ds = scenario_dataset(60, 3);
        let r_hat = RatioModel::from_oracle(RatioOracle::S1Beta { d: 5 });
        let cde = CondDensityModel::OracleGaussian { model: ResponseModel::M2 };
        let pooled = ds.pooled_x();
        let imps = impute(&cde, pooled.view(), 30, &mut stream_rng(5, 0)).unwrap();
        let g = EstimatingFunction::mean();
        let theta = [0.1];
        let mm = orthogonal_moments(&ds, &r_hat, &imps, &g, &theta).unwrap();
        let tau = ds.tau_hat();
        let kappa = imps.kappa as Real;
        for i in 0..ds.len() {
            let m_i = imps.draws.row(i).sum() / kappa - theta[0];
            let expect = if i < ds.n() {
                let r0 = crate::data::true_density_ratio_s1(ds.source_x().row(i)).unwrap();
                r0 * ((ds.source_y()[i] - theta[0]) - m_i) / (1.0 - tau)
            } else {
                m_i / tau
            };
            assert!(
                (mm.values[(i, 0)] - expect).abs() < 1e-10,
                "row {i}: {} vs {expect}",
                mm.values[(i, 0)]
            );
        }
    }

    #[test]
    fn target_row_scaling_and_residual_vanishing() {
        // tau = 1/2: a target row with conditional moment c contributes 2c;
        // a source row where g equals the conditional moment contributes 0.
        let sx = ndarray::array![[0.5]];
        let sy = ndarray::array![0.7];
        let tx = ndarray::array![[0.25]];
        let ds = Dataset::new(sx, sy, tx).unwrap();
        let r_hat = RatioModel::from_oracle(RatioOracle::Unit);
        // One imputation row per observation: value 0.7 for both rows.
        let imps = ImputationSet {
            draws: ndarray::array![[0.7], [0.7]],
            kappa: 1,
            seed: 0,
        };
        let g = EstimatingFunction::mean();
        let mm = orthogonal_moments(&ds, &r_hat, &imps, &g, &[0.2]).unwrap();
        // Source row: g - m = (0.7 - 0.2) - (0.7 - 0.2) = 0.
        assert!((mm.values[(0, 0)]).abs() < 1e-12);
        // Target row: m / tau = 0.5 / 0.5 = 1.
        assert!((mm.values[(1, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_direction_gives_zero_gaps() {
        let ds = scenario_dataset(200, 7);
        let g = EstimatingFunction::mean();
        let eta0 =
            oracle_nuisances(RatioOracle::S1Beta { d: 5 }, ResponseModel::M2, &g).unwrap();
        let h = NuisanceDirection::default();
        let (a, b) = orthogonality_gap(&ds, &g, &[0.0], &eta0, &h, 0.05).unwrap();
        assert_eq!(a, 0.0);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn nonpositive_step_is_rejected() {
        let ds = scenario_dataset(50, 8);
        let g = EstimatingFunction::mean();
        let eta0 =
            oracle_nuisances(RatioOracle::S1Beta { d: 5 }, ResponseModel::M2, &g).unwrap();
        let err =
            orthogonality_gap(&ds, &g, &[0.0], &eta0, &NuisanceDirection::default(), 0.0)
                .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn scalar_mean_variance_reduces_to_sample_variance() {
        let ds = scenario_dataset(400, 9);
        let r_hat = RatioModel::from_oracle(RatioOracle::S1Beta { d: 5 });
        let cde = CondDensityModel::OracleGaussian { model: ResponseModel::M2 };
        let pooled = ds.pooled_x();
        let imps = impute(&cde, pooled.view(), 50, &mut stream_rng(11, 0)).unwrap();
        let g = EstimatingFunction::mean();
        let theta = [0.05];
        let mm = orthogonal_moments(&ds, &r_hat, &imps, &g, &theta).unwrap();
        let var = variance_estimates(&mm, &g, &ds, &r_hat, Some(&imps), &theta).unwrap();
        // For the mean estimand Gamma = -1 exactly: the source term cancels
        // and the target term averages -1/tau over the tau fraction of rows.
        assert!((var.gamma[(0, 0)] + 1.0).abs() < 1e-10, "Gamma = {}", var.gamma[(0, 0)]);
        let omega = var.omega[(0, 0)];
        assert!((var.sigma[(0, 0)] - omega).abs() < 1e-8 * omega.abs().max(1.0));
    }

    #[test]
    fn duplicated_moment_coordinates_are_singular() {
        let ds = scenario_dataset(100, 10);
        let r_hat = RatioModel::from_oracle(RatioOracle::Unit);
        let eval: CustomEval = Arc::new(|_x, y, theta, out| {
            out[0] = y - theta[0];
            out[1] = y - theta[0];
        });
        let jac: CustomEval = Arc::new(|_x, _y, _theta, out| {
            out[0] = -1.0;
            out[1] = -1.0;
        });
        let g = EstimatingFunction::custom("dup", 2, 1, true, eval, Some(jac)).unwrap();
        let mm = drw_moments(&ds, &r_hat, &g, &[0.0]).unwrap();
        let err = variance_estimates(&mm, &g, &ds, &r_hat, None, &[0.0]).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "got {err:?}");
    }

    #[test]
    fn quantile_gamma_uses_finite_differences() {
        let ds = scenario_dataset(500, 12);
        let r_hat = RatioModel::from_oracle(RatioOracle::S1Beta { d: 5 });
        let cde = CondDensityModel::OracleGaussian { model: ResponseModel::M2 };
        let pooled = ds.pooled_x();
        let imps = impute(&cde, pooled.view(), 200, &mut stream_rng(13, 0)).unwrap();
        let g = EstimatingFunction::quantile(0.5).unwrap();
        let theta = [0.0];
        let mm = orthogonal_moments(&ds, &r_hat, &imps, &g, &theta).unwrap();
        let var = variance_estimates(&mm, &g, &ds, &r_hat, Some(&imps), &theta).unwrap();
        // The median's Gamma is the (positive) density-like slope of the
        // mean indicator moment; it must be positive and finite here.
        assert!(var.gamma[(0, 0)].is_finite());
        assert!(var.gamma[(0, 0)] > 0.0, "Gamma = {}", var.gamma[(0, 0)]);
        assert!(var.sigma[(0, 0)] > 0.0);
    }

    #[test]
    fn estimand_parsing() {
        assert!(matches!(EstimatingFunction::parse("mean").unwrap().kind(), EstimandKind::Mean));
        assert!(matches!(
            EstimatingFunction::parse("median").unwrap().kind(),
            EstimandKind::Quantile { .. }
        ));
        let q = EstimatingFunction::parse("quantile:0.25").unwrap();
        match q.kind() {
            EstimandKind::Quantile { alpha } => assert!((alpha - 0.25).abs() < 1e-15),
            _ => panic!("expected quantile"),
        }
        assert!(EstimatingFunction::parse("quantile:1.5").is_err());
        assert!(EstimatingFunction::parse("mode").is_err());
    }
}
