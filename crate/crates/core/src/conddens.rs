//! Conditional density estimation through an auxiliary-distribution ratio,
//! and the multiple-imputation engine built on it.
//!
//! The conditional density factors as `p(y|x) = r~(y, x) * p~(y)` where `p~`
//! is a known auxiliary density whose support covers the responses. The
//! auxiliary ratio `r~` is a (d+1)-input density ratio between observed pairs
//! `(Y_i, X_i)` and synthetic pairs `(Y~_i, X_i)` with `Y~_i` drawn from the
//! auxiliary, so the same two-sample machinery as the covariate ratio fits
//! it. Imputation draws `kappa` responses per row from the estimated
//! conditional; the draws are generated once per dataset and reused for every
//! parameter value (common random numbers).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{noise_sd, regression_value, stream_rng, Dataset, ResponseModel};
use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::funclass::{self, FittedFunction, FunctionClassConfig};
use crate::moments::{EstimandKind, EstimatingFunction};
use crate::Real;

/// Number of grid points used for renormalization and inverse-CDF sampling.
pub const GRID_POINTS: usize = 512;

/// Known auxiliary response distribution (normal).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AuxiliaryDistribution {
    pub location: Real,
    pub scale: Real,
}

impl AuxiliaryDistribution {
    pub fn new(location: Real, scale: Real) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && location.is_finite()) {
            return Err(Error::Config(format!(
                "auxiliary distribution needs finite location and positive scale, got ({location}, {scale})"
            )));
        }
        Ok(Self { location, scale })
    }

    /// Location at the sample mean of the responses, scale at twice their
    /// standard deviation: covers the response support with room to spare.
    pub fn matched_to(y: ArrayView1<'_, Real>) -> Result<Self> {
        let n = y.len() as Real;
        let mean = y.sum() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / n;
        let sd = var.sqrt();
        if sd <= 0.0 {
            // Degenerate responses still need a positive-scale auxiliary.
            return Self::new(mean, 1.0);
        }
        Self::new(mean, 2.0 * sd)
    }

    pub fn pdf(&self, y: Real) -> Real {
        let z = (y - self.location) / self.scale;
        (-0.5 * z * z).exp() / (self.scale * (2.0 * std::f64::consts::PI).sqrt())
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Real {
        self.location + self.scale * rng.sample::<Real, _>(StandardNormal)
    }
}

/// A conditional density estimate: either the fitted auxiliary-ratio model or
/// a closed-form Gaussian oracle for the simulation designs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CondDensityModel {
    Fitted {
        aux: AuxiliaryDistribution,
        ratio_fit: FittedFunction<Real>,
        y_grid: Vec<Real>,
    },
    /// True conditional density of a response model: y | x is normal with the
    /// model's regression mean and heteroskedastic noise.
    OracleGaussian { model: ResponseModel },
}

impl CondDensityModel {
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            CondDensityModel::Fitted { ratio_fit, .. } => Some(ratio_fit.input_dim() - 1),
            CondDensityModel::OracleGaussian { .. } => None,
        }
    }

    /// Unnormalized density estimate at arbitrary (x, y) pairs: the raw
    /// product `r~(y, x) p~(y)` for the fitted model, the exact density for
    /// the oracle.
    pub fn density_at(
        &self,
        x: ArrayView2<'_, Real>,
        y: ArrayView1<'_, Real>,
    ) -> Result<Array1<Real>> {
        if x.nrows() != y.len() {
            return Err(Error::Shape(format!("{} rows of x but {} responses", x.nrows(), y.len())));
        }
        match self {
            CondDensityModel::Fitted { aux, ratio_fit, .. } => {
                let joint = stack_y_x(y, x);
                let mut vals = ratio_fit.evaluate(joint.view())?;
                for (v, &yy) in vals.iter_mut().zip(y.iter()) {
                    *v *= aux.pdf(yy);
                }
                Ok(vals)
            }
            CondDensityModel::OracleGaussian { model } => {
                let mut out = Array1::zeros(y.len());
                for (i, row) in x.rows().into_iter().enumerate() {
                    let mu = regression_value(row, *model);
                    let sd = noise_sd(row);
                    let z = (y[i] - mu) / sd;
                    out[i] = (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
                }
                Ok(out)
            }
        }
    }

    /// Evaluation grid of the fitted model, if any.
    pub fn y_grid(&self) -> Option<&[Real]> {
        match self {
            CondDensityModel::Fitted { y_grid, .. } => Some(y_grid),
            CondDensityModel::OracleGaussian { .. } => None,
        }
    }

    /// Renormalized density over the grid at one covariate row; integrates to
    /// one against the grid step.
    pub fn grid_density(&self, x_row: ArrayView1<'_, Real>) -> Result<(Vec<Real>, Real)> {
        match self {
            CondDensityModel::Fitted { aux, ratio_fit, y_grid } => {
                let g = y_grid.len();
                let d = ratio_fit.input_dim() - 1;
                if x_row.len() != d {
                    return Err(Error::Shape(format!(
                        "conditional density expects {d} covariates, got {}",
                        x_row.len()
                    )));
                }
                let step = y_grid[1] - y_grid[0];
                let mut joint = Array2::zeros((g, d + 1));
                for (i, &yg) in y_grid.iter().enumerate() {
                    joint[(i, 0)] = yg;
                    for j in 0..d {
                        joint[(i, j + 1)] = x_row[j];
                    }
                }
                let ratios = ratio_fit.evaluate(joint.view())?;
                let mut dens: Vec<Real> =
                    ratios.iter().zip(y_grid.iter()).map(|(&r, &yg)| r * aux.pdf(yg)).collect();
                let total: Real = dens.iter().sum::<Real>() * step;
                if !(total > 0.0 && total.is_finite()) {
                    return Err(Error::Numeric(
                        "conditional density vanished on the whole grid".into(),
                    ));
                }
                for v in dens.iter_mut() {
                    *v /= total;
                }
                Ok((dens, step))
            }
            CondDensityModel::OracleGaussian { .. } => Err(Error::Contract(
                "the Gaussian oracle has no evaluation grid; sample it directly".into(),
            )),
        }
    }
}

/// Multiple-imputation draws: one row of `kappa` synthetic responses per
/// observation row, sampled once and reused for every parameter value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImputationSet {
    pub draws: Array2<Real>,
    pub kappa: usize,
    pub seed: u64,
}

/// Fit the conditional density: draw auxiliary responses, then fit the
/// (d+1)-input ratio with the auxiliary pairs on the `ell1` side and the
/// observed pairs on the `ell2` side.
pub fn fit_conditional_density(
    dataset: &Dataset,
    spec: &DivergenceSpec<Real>,
    cfg: &FunctionClassConfig,
    aux: Option<AuxiliaryDistribution>,
    rng: &mut ChaCha8Rng,
) -> Result<CondDensityModel> {
    let y = dataset.source_y();
    let aux = match aux {
        Some(a) => a,
        None => AuxiliaryDistribution::matched_to(y)?,
    };
    let n = dataset.n();
    let mut aux_y = Array1::zeros(n);
    for v in aux_y.iter_mut() {
        *v = aux.sample(rng);
    }
    let aux_pairs = stack_y_x(aux_y.view(), dataset.source_x());
    let obs_pairs = stack_y_x(y, dataset.source_x());
    let ratio_fit = funclass::fit_erm(cfg, spec, aux_pairs.view(), obs_pairs.view(), rng)?;

    let (y_min, y_max) = y
        .iter()
        .fold((Real::INFINITY, Real::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let lo = y_min - 3.0 * aux.scale;
    let hi = y_max + 3.0 * aux.scale;
    let y_grid: Vec<Real> =
        (0..GRID_POINTS).map(|i| lo + (hi - lo) * i as Real / (GRID_POINTS - 1) as Real).collect();
    Ok(CondDensityModel::Fitted { aux, ratio_fit, y_grid })
}

/// Draw `kappa` imputed responses per row of `x_all`. Rows are independent
/// streams derived from one seed pulled off `rng`, so the set is reproducible
/// regardless of thread scheduling.
pub fn impute(
    model: &CondDensityModel,
    x_all: ArrayView2<'_, Real>,
    kappa: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ImputationSet> {
    if kappa == 0 {
        return Err(Error::Config("kappa must be at least 1".into()));
    }
    let n_rows = x_all.nrows();
    let seed: u64 = rng.gen();
    let mut draws = Array2::zeros((n_rows, kappa));
    let rows: Vec<(usize, ndarray::ArrayViewMut1<'_, Real>)> =
        draws.rows_mut().into_iter().enumerate().collect();
    let results: Result<Vec<()>> = rows
        .into_par_iter()
        .map(|(i, mut out)| {
            let mut row_rng = stream_rng(seed, i as u64);
            match model {
                CondDensityModel::Fitted { .. } => {
                    let (dens, step) = model.grid_density(x_all.row(i)).map_err(|e| match e {
                        Error::Numeric(_) => Error::Numeric(format!(
                            "imputation row {i}: conditional density vanished on the grid"
                        )),
                        other => other,
                    })?;
                    let grid = model.y_grid().expect("fitted model has a grid");
                    sample_from_grid(grid, &dens, step, &mut out, &mut row_rng);
                }
                CondDensityModel::OracleGaussian { model: rm } => {
                    let x_row = x_all.row(i);
                    let mu = regression_value(x_row, *rm);
                    let sd = noise_sd(x_row);
                    let normal = Normal::new(mu, sd).expect("positive noise scale");
                    for v in out.iter_mut() {
                        *v = normal.sample(&mut row_rng);
                    }
                }
            }
            Ok(())
        })
        .collect();
    results?;
    Ok(ImputationSet { draws, kappa, seed })
}

/// Inverse-CDF sampling on the renormalized grid with within-cell uniform
/// placement.
fn sample_from_grid(
    grid: &[Real],
    dens: &[Real],
    step: Real,
    out: &mut ndarray::ArrayViewMut1<'_, Real>,
    rng: &mut ChaCha8Rng,
) {
    let g = grid.len();
    let mut cdf = Vec::with_capacity(g);
    let mut acc = 0.0;
    for &d in dens {
        acc += d * step;
        cdf.push(acc);
    }
    let total = acc;
    for v in out.iter_mut() {
        let u: Real = rng.gen::<Real>() * total;
        let cell = cdf.partition_point(|&c| c < u).min(g - 1);
        let lower = if cell == 0 { 0.0 } else { cdf[cell - 1] };
        let mass = (cdf[cell] - lower).max(Real::MIN_POSITIVE);
        let frac = ((u - lower) / mass).clamp(0.0, 1.0);
        *v = grid[cell] - 0.5 * step + frac * step;
    }
}

/// Imputed conditional moment matrix: row i averages the estimating function
/// over that row's draws at fixed theta. No refitting happens for new theta.
pub fn conditional_moment(
    imputations: &ImputationSet,
    g: &EstimatingFunction,
    x_all: ArrayView2<'_, Real>,
    theta: &[Real],
) -> Result<Array2<Real>> {
    let n_rows = imputations.draws.nrows();
    if x_all.nrows() != n_rows {
        return Err(Error::Shape(format!(
            "{} imputation rows but {} covariate rows",
            n_rows,
            x_all.nrows()
        )));
    }
    let r = g.r();
    let kappa = imputations.kappa as Real;
    let mut out = Array2::zeros((n_rows, r));
    let mut gval = vec![0.0; r];
    for i in 0..n_rows {
        let x_row = x_all.row(i);
        let mut acc = vec![0.0; r];
        for &y in imputations.draws.row(i).iter() {
            g.eval_into(x_row, y, theta, &mut gval);
            for (a, v) in acc.iter_mut().zip(gval.iter()) {
                *a += *v;
            }
        }
        for (j, a) in acc.iter().enumerate() {
            out[(i, j)] = a / kappa;
        }
    }
    Ok(out)
}

/// Precomputed per-row summaries that make repeated conditional-moment
/// evaluation cheap during the outer parameter search. Produces the same
/// values as [`conditional_moment`].
#[derive(Clone)]
pub enum PreparedMoments {
    /// Mean estimand: row means of the draws.
    Mean { row_means: Array1<Real> },
    /// Quantile estimand: sorted draws per row.
    Quantile { alpha: Real, sorted: Vec<Vec<Real>>, kappa: usize },
    /// Anything else: evaluate the full average each time.
    General { imputations: ImputationSet, x_all: Array2<Real>, g: EstimatingFunction },
}

impl PreparedMoments {
    pub fn build(
        imputations: &ImputationSet,
        g: &EstimatingFunction,
        x_all: ArrayView2<'_, Real>,
    ) -> Self {
        match g.kind() {
            EstimandKind::Mean => {
                let kappa = imputations.kappa as Real;
                let row_means = imputations
                    .draws
                    .rows()
                    .into_iter()
                    .map(|row| row.sum() / kappa)
                    .collect::<Array1<Real>>();
                PreparedMoments::Mean { row_means }
            }
            EstimandKind::Quantile { alpha } => {
                let sorted: Vec<Vec<Real>> = imputations
                    .draws
                    .rows()
                    .into_iter()
                    .map(|row| {
                        let mut v = row.to_vec();
                        v.sort_by(Real::total_cmp);
                        v
                    })
                    .collect();
                PreparedMoments::Quantile { alpha: *alpha, sorted, kappa: imputations.kappa }
            }
            EstimandKind::Custom { .. } => PreparedMoments::General {
                imputations: imputations.clone(),
                x_all: x_all.to_owned(),
                g: g.clone(),
            },
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            PreparedMoments::Mean { row_means } => row_means.len(),
            PreparedMoments::Quantile { sorted, .. } => sorted.len(),
            PreparedMoments::General { imputations, .. } => imputations.draws.nrows(),
        }
    }

    /// m_hat(X_i, theta) for every row, as a `rows x r` matrix.
    pub fn eval(&self, theta: &[Real]) -> Result<Array2<Real>> {
        match self {
            PreparedMoments::Mean { row_means } => {
                let t = theta[0];
                let mut out = Array2::zeros((row_means.len(), 1));
                for (i, &m) in row_means.iter().enumerate() {
                    out[(i, 0)] = m - t;
                }
                Ok(out)
            }
            PreparedMoments::Quantile { alpha, sorted, kappa } => {
                let t = theta[0];
                let mut out = Array2::zeros((sorted.len(), 1));
                for (i, row) in sorted.iter().enumerate() {
                    let count = row.partition_point(|&v| v <= t);
                    out[(i, 0)] = count as Real / *kappa as Real - alpha;
                }
                Ok(out)
            }
            PreparedMoments::General { imputations, x_all, g } => {
                conditional_moment(imputations, g, x_all.view(), theta)
            }
        }
    }
}

/// Empirical L2 error of an imputed moment matrix against an oracle: the sum
/// over moment coordinates of root-mean-square deviations.
pub fn empirical_moment_error(
    m_hat: ArrayView2<'_, Real>,
    m_oracle: ArrayView2<'_, Real>,
) -> Result<Real> {
    if m_hat.dim() != m_oracle.dim() {
        return Err(Error::Shape(format!(
            "moment matrices differ in shape: {:?} vs {:?}",
            m_hat.dim(),
            m_oracle.dim()
        )));
    }
    let n = m_hat.nrows() as Real;
    let mut total = 0.0;
    for j in 0..m_hat.ncols() {
        let mut accum = 0.0;
        for i in 0..m_hat.nrows() {
            let d = m_hat[(i, j)] - m_oracle[(i, j)];
            accum += d * d;
        }
        total += (accum / n).sqrt();
    }
    Ok(total)
}

/// Mean integrated squared error of the fitted grid density against a true
/// conditional pdf at one covariate row.
pub fn grid_mise(
    model: &CondDensityModel,
    x_row: ArrayView1<'_, Real>,
    true_pdf: impl Fn(Real) -> Real,
) -> Result<Real> {
    let (dens, step) = model.grid_density(x_row)?;
    let grid = model.y_grid().expect("fitted model");
    let mut acc = 0.0;
    for (d, &yg) in dens.iter().zip(grid.iter()) {
        let t = true_pdf(yg);
        acc += (d - t) * (d - t) * step;
    }
    Ok(acc)
}

fn stack_y_x(y: ArrayView1<'_, Real>, x: ArrayView2<'_, Real>) -> Array2<Real> {
    let n = x.nrows();
    let d = x.ncols();
    let mut out = Array2::zeros((n, d + 1));
    for i in 0..n {
        out[(i, 0)] = y[i];
        for j in 0..d {
            out[(i, j + 1)] = x[(i, j)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::stream_rng;
    use crate::divergence::DivergenceId;
    use ndarray::Array2;

    fn kl() -> DivergenceSpec<Real> {
        DivergenceSpec::new(DivergenceId::Kl)
    }

    fn cde_cfg() -> FunctionClassConfig {
        let mut cfg = FunctionClassConfig::mlp_default();
        cfg.degree_or_width_candidates = vec![16];
        cfg.depth_candidates = vec![2];
        cfg.optimizer.max_epochs = 1500;
        cfg
    }

    /// Y = X + N(0,1) with X uniform: conditional density is N(x, 1).
    fn gaussian_shift_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = stream_rng(seed, 0);
        let sx = Array2::from_shape_fn((n, 1), |_| rng.gen::<Real>());
        let sy = Array1::from_shape_fn(n, |i| {
            let z: Real = rng.sample(StandardNormal);
            sx[(i, 0)] + z
        });
        let tx = Array2::from_shape_fn((n / 2, 1), |_| rng.gen::<Real>());
        Dataset::new(sx, sy, tx).unwrap()
    }

    #[test]
    fn grid_density_normalizes_to_one() {
        let ds = gaussian_shift_dataset(1200, 3);
        let mut cfg = cde_cfg();
        cfg.optimizer.max_epochs = 300;
        let model = fit_conditional_density(&ds, &kl(), &cfg, None, &mut stream_rng(5, 0)).unwrap();
        for &xv in &[0.1, 0.5, 0.9] {
            let x = ndarray::arr1(&[xv]);
            let (dens, step) = model.grid_density(x.view()).unwrap();
            let total: Real = dens.iter().sum::<Real>() * step;
            assert!((total - 1.0).abs() < 1e-6, "grid integral was {total}");
        }
    }

    #[test]
    fn fitted_density_close_to_gaussian_truth() {
        let ds = gaussian_shift_dataset(5000, 500);
        let model =
            fit_conditional_density(&ds, &kl(), &cde_cfg(), None, &mut stream_rng(9, 0)).unwrap();
        let mut total = 0.0;
        for &xv in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            let x = ndarray::arr1(&[xv]);
            total += grid_mise(&model, x.view(), |y| {
                let z = y - xv;
                (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
            })
            .unwrap();
        }
        let mean = total / 5.0;
        assert!(mean < 0.01, "mean grid MISE over probes was {mean}");
    }

    #[test]
    fn independence_gives_marginal_density() {
        // Y independent of X: fitted p(y|x) should match the marginal at
        // several probe points.
        let n = 5000;
        let mut rng = stream_rng(11, 0);
        let sx = Array2::from_shape_fn((n, 1), |_| rng.gen::<Real>());
        let sy = Array1::from_shape_fn(n, |_| rng.sample::<Real, _>(StandardNormal));
        let tx = Array2::from_shape_fn((100, 1), |_| rng.gen::<Real>());
        let ds = Dataset::new(sx, sy, tx).unwrap();
        let model =
            fit_conditional_density(&ds, &kl(), &cde_cfg(), None, &mut stream_rng(13, 0)).unwrap();
        let marginal = |y: Real| (-0.5 * y * y).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut sup = 0.0;
        for &xv in &[0.05, 0.3, 0.5, 0.7, 0.95] {
            let x = ndarray::arr1(&[xv]);
            let (dens, step) = model.grid_density(x.view()).unwrap();
            let grid = model.y_grid().unwrap();
            let l2: Real = dens
                .iter()
                .zip(grid.iter())
                .map(|(&d, &yg)| (d - marginal(yg)) * (d - marginal(yg)) * step)
                .sum::<Real>()
                .sqrt();
            if l2 > sup {
                sup = l2;
            }
        }
        assert!(sup < 0.1, "sup grid L2 distance from marginal was {sup}");
    }

    #[test]
    fn imputation_is_theta_free_and_reproducible() {
        let ds = gaussian_shift_dataset(300, 17);
        let mut cfg = cde_cfg();
        cfg.optimizer.max_epochs = 200;
        let model = fit_conditional_density(&ds, &kl(), &cfg, None, &mut stream_rng(17, 0)).unwrap();
        let x = ds.pooled_x();
        let a = impute(&model, x.view(), 25, &mut stream_rng(19, 0)).unwrap();
        let b = impute(&model, x.view(), 25, &mut stream_rng(19, 0)).unwrap();
        assert_eq!(a.draws, b.draws);

        // Different theta reuse identical draws; for the mean estimand the
        // row values differ by exactly the theta difference.
        let g_mean = EstimatingFunction::mean();
        let m1 = conditional_moment(&a, &g_mean, x.view(), &[0.0]).unwrap();
        let m2 = conditional_moment(&a, &g_mean, x.view(), &[1.0]).unwrap();
        for i in 0..m1.nrows() {
            assert!((m1[(i, 0)] - 1.0 - m2[(i, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_imputation_concentrates_on_conditional_mean() {
        let model = CondDensityModel::OracleGaussian { model: ResponseModel::M1 };
        let n = 60;
        let mut rng = stream_rng(23, 0);
        let x = Array2::from_shape_fn((n, 2), |_| rng.gen::<Real>());
        let kappa = 1000;
        let imps = impute(&model, x.view(), kappa, &mut stream_rng(29, 0)).unwrap();
        let mut bad = 0;
        for i in 0..n {
            let mu = regression_value(x.row(i), ResponseModel::M1);
            let sd = noise_sd(x.row(i));
            let mean = imps.draws.row(i).sum() / kappa as Real;
            if (mean - mu).abs() > 3.0 * sd / (kappa as Real).sqrt() {
                bad += 1;
            }
        }
        // Three-sigma misses should be rare.
        assert!(bad <= 2, "{bad} rows outside the CLT band");
    }

    #[test]
    fn prepared_moments_match_direct_average() {
        let ds = gaussian_shift_dataset(150, 31);
        let model = CondDensityModel::OracleGaussian { model: ResponseModel::M1 };
        let x = ds.pooled_x();
        let imps = impute(&model, x.view(), 40, &mut stream_rng(31, 0)).unwrap();
        for g in [EstimatingFunction::mean(), EstimatingFunction::quantile(0.3).unwrap()] {
            let prepared = PreparedMoments::build(&imps, &g, x.view());
            for theta in [-0.3, 0.1, 0.8] {
                let fast = prepared.eval(&[theta]).unwrap();
                let slow = conditional_moment(&imps, &g, x.view(), &[theta]).unwrap();
                for i in 0..fast.nrows() {
                    assert!(
                        (fast[(i, 0)] - slow[(i, 0)]).abs() < 1e-12,
                        "row {i} at theta {theta}"
                    );
                }
            }
        }
    }

    #[test]
    fn moment_error_of_constant_shift() {
        let m0 = Array2::zeros((50, 2));
        let mut m_hat = Array2::zeros((50, 2));
        m_hat.fill(0.5);
        let e = empirical_moment_error(m_hat.view(), m0.view()).unwrap();
        assert!((e - 1.0).abs() < 1e-12, "two coordinates each shifted by 0.5");
        assert_eq!(empirical_moment_error(m0.view(), m0.view()).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_point_mass_stays_in_cell() {
        // A handcrafted grid density with all mass in one cell.
        let grid: Vec<Real> = (0..GRID_POINTS).map(|i| i as Real * 0.01).collect();
        let mut dens = vec![0.0; GRID_POINTS];
        dens[100] = 100.0; // integrates to 1 with step 0.01
        let mut out = Array1::zeros(200);
        let mut rng = stream_rng(37, 0);
        sample_from_grid(&grid, &dens, 0.01, &mut out.view_mut(), &mut rng);
        let lo = grid[100] - 0.005;
        let hi = grid[100] + 0.005;
        assert!(out.iter().all(|&v| v >= lo && v <= hi));
    }

    #[test]
    fn zero_kappa_is_rejected() {
        let model = CondDensityModel::OracleGaussian { model: ResponseModel::M2 };
        let x = Array2::zeros((4, 2));
        let err = impute(&model, x.view(), 0, &mut stream_rng(1, 0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
