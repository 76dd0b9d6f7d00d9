//! Trainable nonparametric function approximators fitted by empirical risk
//! minimization against a two-sample loss pair, with cross-validated capacity
//! selection and output clamping.
//!
//! Two function classes ship: a tensor-product Legendre sieve (linear in its
//! coefficients) and a small ReLU multilayer perceptron. Both are trained by
//! full-batch adaptive-moment gradient descent on
//!
//! ```text
//! J(f) = mean_i ell1(clamp(link(f(x_i))))  -  mean_j ell2(clamp(link(f(x_j))))
//! ```
//!
//! over the source sample {x_i} and target sample {x_j}. Outputs pass through
//! the divergence's link and are truncated to `[r_min, r_max]`, which keeps
//! every loss evaluation inside its domain and bounds the fitted ratio.

use ndarray::linalg::{general_mat_mul, general_mat_vec_mul};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::{DivergenceSpec, Link};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which approximator family to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    PolySieve,
    Mlp,
}

/// Full-batch Adam settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Minimum objective improvement that counts as progress.
    pub tolerance: f64,
    /// Epochs without progress before stopping.
    pub patience: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-2, max_epochs: 2000, tolerance: 1e-6, patience: 50 }
    }
}

/// Capacity grid, clamp bounds, and optimizer for one fit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FunctionClassConfig {
    pub kind: FunctionKind,
    /// Sieve total degrees or MLP widths, depending on `kind`.
    pub degree_or_width_candidates: Vec<usize>,
    /// Hidden-layer counts; MLP only.
    pub depth_candidates: Vec<usize>,
    pub clamp_min: f64,
    pub clamp_max: f64,
    pub cv_folds: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for FunctionClassConfig {
    fn default() -> Self {
        Self::mlp_default()
    }
}

impl FunctionClassConfig {
    pub fn mlp_default() -> Self {
        Self {
            kind: FunctionKind::Mlp,
            degree_or_width_candidates: vec![16, 32, 64],
            depth_candidates: vec![1, 2],
            clamp_min: 0.01,
            clamp_max: 100.0,
            cv_folds: 3,
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn poly_default() -> Self {
        Self {
            kind: FunctionKind::PolySieve,
            degree_or_width_candidates: vec![1, 2, 3],
            depth_candidates: Vec::new(),
            clamp_min: 0.01,
            clamp_max: 100.0,
            cv_folds: 3,
            optimizer: OptimizerConfig::default(),
        }
    }

    /// Same settings restricted to a single capacity (skips CV on refits).
    pub fn with_capacity(&self, capacity: Capacity) -> Self {
        let mut cfg = self.clone();
        match capacity {
            Capacity::Degree(g) => {
                cfg.kind = FunctionKind::PolySieve;
                cfg.degree_or_width_candidates = vec![g];
                cfg.depth_candidates = Vec::new();
            }
            Capacity::Mlp { width, depth } => {
                cfg.kind = FunctionKind::Mlp;
                cfg.degree_or_width_candidates = vec![width];
                cfg.depth_candidates = vec![depth];
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clamp_min > 0.0 && self.clamp_min < self.clamp_max && self.clamp_max.is_finite())
        {
            return Err(Error::Config(format!(
                "clamp bounds must satisfy 0 < r_min < r_max < inf, got [{}, {}]",
                self.clamp_min, self.clamp_max
            )));
        }
        if self.degree_or_width_candidates.is_empty() {
            return Err(Error::Config("empty capacity grid".into()));
        }
        if self.kind == FunctionKind::Mlp && self.depth_candidates.is_empty() {
            return Err(Error::Config("MLP needs at least one depth candidate".into()));
        }
        if self.optimizer.learning_rate <= 0.0 || self.optimizer.max_epochs == 0 {
            return Err(Error::Config("optimizer needs a positive learning rate and epochs".into()));
        }
        Ok(())
    }

    /// Capacity grid ordered by parameter count (ascending), so score ties
    /// break toward the smaller model.
    pub fn candidates(&self, input_dim: usize) -> Vec<Capacity> {
        let mut caps: Vec<Capacity> = match self.kind {
            FunctionKind::PolySieve => {
                self.degree_or_width_candidates.iter().map(|&g| Capacity::Degree(g)).collect()
            }
            FunctionKind::Mlp => {
                let mut v = Vec::new();
                for &depth in &self.depth_candidates {
                    for &width in &self.degree_or_width_candidates {
                        v.push(Capacity::Mlp { width, depth });
                    }
                }
                v
            }
        };
        caps.sort_by_key(|c| c.param_count(input_dim));
        caps
    }
}

/// One point of the capacity grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capacity {
    Degree(usize),
    Mlp { width: usize, depth: usize },
}

impl Capacity {
    pub fn param_count(&self, input_dim: usize) -> usize {
        match *self {
            Capacity::Degree(g) => count_exponents(input_dim, g).min(MAX_BASIS),
            Capacity::Mlp { width, depth } => {
                let mut dims = vec![input_dim];
                dims.extend(std::iter::repeat(width).take(depth));
                dims.push(1);
                dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
            }
        }
    }
}

/// Hard cap on the sieve basis size.
pub const MAX_BASIS: usize = 200;

fn count_exponents(d: usize, g: usize) -> usize {
    // C(d + g, g), saturating; only used for ordering and the cap.
    let mut c: usize = 1;
    for i in 1..=g {
        c = c.saturating_mul(d + i) / i;
        if c >= MAX_BASIS {
            return MAX_BASIS;
        }
    }
    c
}

/// Tensor-product Legendre basis on per-column standardized inputs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub(crate) struct PolyBasis<T> {
    exponents: Vec<Vec<u8>>,
    col_lo: Vec<T>,
    col_hi: Vec<T>,
}

impl<T: Scalar> PolyBasis<T> {
    /// Build the basis for total degree `g`, standardizing each column to
    /// [-1, 1] using the training ranges of `x`.
    pub(crate) fn build(x: ArrayView2<'_, T>, g: usize) -> Self {
        let d = x.ncols();
        let mut col_lo = vec![T::infinity(); d];
        let mut col_hi = vec![T::neg_infinity(); d];
        for row in x.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v < col_lo[j] {
                    col_lo[j] = v;
                }
                if v > col_hi[j] {
                    col_hi[j] = v;
                }
            }
        }
        // Graded order: all tuples of total degree 0, then 1, up to g.
        let mut exponents = Vec::new();
        let mut scratch = vec![0u8; d];
        for total in 0..=g {
            emit_of_total(d, &mut scratch, 0, total, &mut exponents);
            if exponents.len() >= MAX_BASIS {
                break;
            }
        }
        exponents.truncate(MAX_BASIS);
        Self { exponents, col_lo, col_hi }
    }

    pub(crate) fn len(&self) -> usize {
        self.exponents.len()
    }

    fn standardize(&self, v: T, j: usize) -> T {
        let lo = self.col_lo[j];
        let hi = self.col_hi[j];
        if hi <= lo {
            return T::zero();
        }
        T::from_config(2.0) * (v - lo) / (hi - lo) - T::one()
    }

    /// Basis matrix for a batch of rows.
    pub(crate) fn matrix(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let k = x.nrows();
        let d = x.ncols();
        let q = self.exponents.len();
        let max_deg =
            self.exponents.iter().flat_map(|e| e.iter()).copied().max().unwrap_or(0) as usize;
        let mut out = Array2::zeros((k, q));
        // Legendre values per coordinate up to max degree, reused per row.
        let mut leg = vec![vec![T::zero(); max_deg + 1]; d];
        for (i, row) in x.rows().into_iter().enumerate() {
            for j in 0..d {
                let z = self.standardize(row[j], j);
                legendre_into(z, &mut leg[j]);
            }
            for (b, exps) in self.exponents.iter().enumerate() {
                let mut v = T::one();
                for (j, &e) in exps.iter().enumerate() {
                    if e > 0 {
                        v *= leg[j][e as usize];
                    }
                }
                out[(i, b)] = v;
            }
        }
        out
    }
}

fn legendre_into<T: Scalar>(z: T, out: &mut [T]) {
    out[0] = T::one();
    if out.len() > 1 {
        out[1] = z;
    }
    for k in 1..out.len().saturating_sub(1) {
        let kf = T::from_usize(k).expect("degree fits scalar");
        let two_k1 = T::from_usize(2 * k + 1).expect("degree fits scalar");
        let k1 = T::from_usize(k + 1).expect("degree fits scalar");
        out[k + 1] = (two_k1 * z * out[k] - kf * out[k - 1]) / k1;
    }
}

fn emit_of_total(d: usize, current: &mut Vec<u8>, pos: usize, remaining: usize, out: &mut Vec<Vec<u8>>) {
    if out.len() >= MAX_BASIS {
        return;
    }
    if pos == d {
        if remaining == 0 {
            out.push(current.clone());
        }
        return;
    }
    for e in 0..=remaining {
        current[pos] = e as u8;
        emit_of_total(d, current, pos + 1, remaining - e, out);
        if out.len() >= MAX_BASIS {
            return;
        }
    }
    current[pos] = 0;
}

/// Network or basis shape of a fitted function.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Architecture<T> {
    PolySieve(PolyBasisPublic<T>),
    Mlp { dims: Vec<usize> },
}

/// Serializable sieve descriptor (exponent tuples plus standardization).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PolyBasisPublic<T> {
    pub(crate) basis: PolyBasis<T>,
}

/// A trained approximator: architecture, flat parameter vector, link and
/// clamp. Evaluation is deterministic given the parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedFunction<T> {
    arch: Architecture<T>,
    params: Vec<T>,
    link: Link,
    clamp_min: T,
    clamp_max: T,
    input_dim: usize,
    objective: T,
    capacity: Capacity,
    /// Best-so-far objective envelope over training epochs.
    objective_trace: Vec<T>,
}

impl<T: Scalar> FittedFunction<T> {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn objective_value(&self) -> T {
        self.objective
    }

    pub fn capacity(&self) -> Capacity {
        self.capacity
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn clamp(&self) -> (T, T) {
        (self.clamp_min, self.clamp_max)
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn objective_trace(&self) -> &[T] {
        &self.objective_trace
    }

    /// Raw pre-link output of the network/basis.
    pub fn raw(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        if x.ncols() != self.input_dim {
            return Err(Error::Shape(format!(
                "function expects {} inputs, got {}",
                self.input_dim,
                x.ncols()
            )));
        }
        Ok(match &self.arch {
            Architecture::PolySieve(p) => {
                let b = p.basis.matrix(x);
                let beta = Array1::from_vec(self.params.clone());
                b.dot(&beta)
            }
            Architecture::Mlp { dims } => mlp_forward(dims, &self.params, x),
        })
    }

    /// Link then clamp; the public evaluation path.
    pub fn evaluate(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        let mut out = self.raw(x)?;
        for v in out.iter_mut() {
            *v = apply_link(self.link, *v).min(self.clamp_max).max(self.clamp_min);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fitted function serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("bad model JSON: {e}")))
    }
}

fn apply_link<T: Scalar>(link: Link, raw: T) -> T {
    match link {
        Link::Identity => raw,
        Link::Exp => raw.exp(),
    }
}

fn link_deriv<T: Scalar>(link: Link, raw: T, linked: T) -> T {
    let _ = raw;
    match link {
        Link::Identity => T::one(),
        Link::Exp => linked,
    }
}

fn layer_offsets(dims: &[usize]) -> Vec<(usize, usize, usize, usize)> {
    // (weight offset, bias offset, in_dim, out_dim) per layer
    let mut offs = Vec::new();
    let mut cursor = 0;
    for w in dims.windows(2) {
        let (input, output) = (w[0], w[1]);
        offs.push((cursor, cursor + input * output, input, output));
        cursor += input * output + output;
    }
    offs
}

/// Evaluation-only forward pass; training uses [`MlpPass`] buffers instead.
fn mlp_forward<T: Scalar>(dims: &[usize], params: &[T], x: ArrayView2<'_, T>) -> Array1<T> {
    let offsets = layer_offsets(dims);
    let n_layers = offsets.len();
    let mut a = x.to_owned();
    for (l, &(w_off, b_off, input, output)) in offsets.iter().enumerate() {
        let w = ArrayView2::from_shape((output, input), &params[w_off..w_off + input * output])
            .expect("weight block");
        let b = &params[b_off..b_off + output];
        let mut z = a.dot(&w.t());
        for mut row in z.rows_mut() {
            for (v, &bj) in row.iter_mut().zip(b.iter()) {
                *v += bj;
            }
        }
        if l + 1 < n_layers {
            z.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
            a = z;
        } else {
            return z.index_axis(Axis(1), 0).to_owned();
        }
    }
    unreachable!("dims always has at least one layer")
}

/// One sample's preallocated forward/backward buffers for a fixed MLP shape.
struct MlpPass<T> {
    /// Post-activations per layer; index 0 holds the input batch.
    acts: Vec<Array2<T>>,
    /// Pre-activations per layer.
    zs: Vec<Array2<T>>,
    /// Backpropagated deltas, same shapes as `zs`.
    deltas: Vec<Array2<T>>,
    /// Raw network output (copy of the last pre-activation column).
    raw: Array1<T>,
    /// Loss derivative with respect to the raw output.
    dout: Array1<T>,
}

impl<T: Scalar> MlpPass<T> {
    fn new(dims: &[usize], x: Array2<T>) -> Self {
        let rows = x.nrows();
        let mut acts = vec![x];
        let mut zs = Vec::new();
        let mut deltas = Vec::new();
        for &out in &dims[1..] {
            zs.push(Array2::zeros((rows, out)));
            deltas.push(Array2::zeros((rows, out)));
            acts.push(Array2::zeros((rows, out)));
        }
        Self { acts, zs, deltas, raw: Array1::zeros(rows), dout: Array1::zeros(rows) }
    }

    fn forward(&mut self, dims: &[usize], params: &[T]) {
        let offsets = layer_offsets(dims);
        let n_layers = offsets.len();
        for (l, &(w_off, b_off, input, output)) in offsets.iter().enumerate() {
            let w = ArrayView2::from_shape((output, input), &params[w_off..w_off + input * output])
                .expect("weight block");
            let b = &params[b_off..b_off + output];
            let (head, tail) = self.acts.split_at_mut(l + 1);
            let a_prev = &head[l];
            general_mat_mul(T::one(), a_prev, &w.t(), T::zero(), &mut self.zs[l]);
            let z_flat = self.zs[l].as_slice_mut().expect("standard layout");
            for chunk in z_flat.chunks_exact_mut(output) {
                for (v, &bj) in chunk.iter_mut().zip(b.iter()) {
                    *v += bj;
                }
            }
            if l + 1 < n_layers {
                let a_flat = tail[0].as_slice_mut().expect("standard layout");
                for (a, &z) in a_flat.iter_mut().zip(z_flat.iter()) {
                    *a = if z > T::zero() { z } else { T::zero() };
                }
            }
        }
        let last = self.zs.len() - 1;
        for (r, row) in self.raw.iter_mut().zip(self.zs[last].rows()) {
            *r = row[0];
        }
    }

    /// Accumulate parameter gradients given the derivative with respect to
    /// the (single-column) output already written into the last delta buffer.
    fn backward(&mut self, dims: &[usize], params: &[T], grad: &mut [T]) {
        let offsets = layer_offsets(dims);
        let n_layers = offsets.len();
        for l in (0..n_layers).rev() {
            let (w_off, b_off, input, output) = offsets[l];
            let a_prev = &self.acts[l];
            let delta = &self.deltas[l];
            let mut gw = ArrayViewMut2::from_shape(
                (output, input),
                &mut grad[w_off..w_off + input * output],
            )
            .expect("gradient block");
            general_mat_mul(T::one(), &delta.t(), a_prev, T::one(), &mut gw);
            for j in 0..output {
                let mut s = T::zero();
                for i in 0..delta.nrows() {
                    s += delta[(i, j)];
                }
                grad[b_off + j] += s;
            }
            if l > 0 {
                let w =
                    ArrayView2::from_shape((output, input), &params[w_off..w_off + input * output])
                        .expect("weight block");
                let (lower, upper) = self.deltas.split_at_mut(l);
                general_mat_mul(T::one(), &upper[0], &w, T::zero(), &mut lower[l - 1]);
                for (p, &z) in lower[l - 1].iter_mut().zip(self.zs[l - 1].iter()) {
                    if z <= T::zero() {
                        *p = T::zero();
                    }
                }
            }
        }
    }
}

/// Per-fit training state: precomputed design matrices and reusable buffers.
enum Trainer<T> {
    Poly {
        basis: PolyBasis<T>,
        bs: Array2<T>,
        bt: Array2<T>,
        raw_s: Array1<T>,
        raw_t: Array1<T>,
        ds: Array1<T>,
        dt: Array1<T>,
    },
    Mlp {
        dims: Vec<usize>,
        source: MlpPass<T>,
        target: MlpPass<T>,
    },
}

impl<T: Scalar> Trainer<T> {
    fn new(capacity: Capacity, xs: ArrayView2<'_, T>, xt: ArrayView2<'_, T>) -> Self {
        match capacity {
            Capacity::Degree(g) => {
                let basis = PolyBasis::build(xs, g);
                let bs = basis.matrix(xs);
                let bt = basis.matrix(xt);
                let (n, m) = (bs.nrows(), bt.nrows());
                Trainer::Poly {
                    basis,
                    bs,
                    bt,
                    raw_s: Array1::zeros(n),
                    raw_t: Array1::zeros(m),
                    ds: Array1::zeros(n),
                    dt: Array1::zeros(m),
                }
            }
            Capacity::Mlp { width, depth } => {
                let mut dims = vec![xs.ncols()];
                dims.extend(std::iter::repeat(width).take(depth));
                dims.push(1);
                Trainer::Mlp {
                    source: MlpPass::new(&dims, xs.to_owned()),
                    target: MlpPass::new(&dims, xt.to_owned()),
                    dims,
                }
            }
        }
    }

    fn param_count(&self) -> usize {
        match self {
            Trainer::Poly { basis, .. } => basis.len(),
            Trainer::Mlp { dims, .. } => dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum(),
        }
    }

    fn architecture(self) -> Architecture<T> {
        match self {
            Trainer::Poly { basis, .. } => Architecture::PolySieve(PolyBasisPublic { basis }),
            Trainer::Mlp { dims, .. } => Architecture::Mlp { dims },
        }
    }

    fn objective_and_grad(
        &mut self,
        spec: &DivergenceSpec<T>,
        clamp: (T, T),
        params: &[T],
        grad: &mut [T],
    ) -> T {
        for g in grad.iter_mut() {
            *g = T::zero();
        }
        match self {
            Trainer::Poly { bs, bt, raw_s, raw_t, ds, dt, .. } => {
                let beta = ArrayView1::from(params);
                general_mat_vec_mul(T::one(), bs, &beta, T::zero(), raw_s);
                general_mat_vec_mul(T::one(), bt, &beta, T::zero(), raw_t);
                let mut objective = T::zero();
                objective += loss_pass(spec, clamp, raw_s, ds, LossSide::Source);
                objective += loss_pass(spec, clamp, raw_t, dt, LossSide::Target);
                let mut g = ArrayViewMut1::from(&mut *grad);
                general_mat_vec_mul(T::one(), &bs.t(), ds, T::zero(), &mut g);
                general_mat_vec_mul(T::one(), &bt.t(), dt, T::one(), &mut g);
                objective
            }
            Trainer::Mlp { dims, source, target } => {
                source.forward(dims, params);
                target.forward(dims, params);
                let mut objective = T::zero();
                for (pass, side) in
                    [(&mut *source, LossSide::Source), (&mut *target, LossSide::Target)]
                {
                    let last = pass.zs.len() - 1;
                    let raw = std::mem::replace(&mut pass.raw, Array1::zeros(0));
                    let mut dout = std::mem::replace(&mut pass.dout, Array1::zeros(0));
                    objective += loss_pass(spec, clamp, &raw, &mut dout, side);
                    pass.deltas[last].column_mut(0).assign(&dout);
                    pass.raw = raw;
                    pass.dout = dout;
                    pass.backward(dims, params, grad);
                }
                objective
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum LossSide {
    Source,
    Target,
}

/// Loss contribution of one sample and the derivative with respect to each
/// raw output. Clamped points contribute value but zero derivative.
fn loss_pass<T: Scalar>(
    spec: &DivergenceSpec<T>,
    clamp: (T, T),
    raw: &Array1<T>,
    dout: &mut Array1<T>,
    side: LossSide,
) -> T {
    let (cmin, cmax) = clamp;
    let k = T::from_usize(raw.len()).expect("sample size fits scalar");
    let link = spec.link();
    let mut objective = T::zero();
    for (i, &v) in raw.iter().enumerate() {
        let linked = apply_link(link, v);
        let inside = linked >= cmin && linked <= cmax;
        let r = linked.min(cmax).max(cmin);
        match side {
            LossSide::Source => {
                objective += spec.ell1(r) / k;
                dout[i] = if inside {
                    spec.ell1_deriv(r) * link_deriv(link, v, linked) / k
                } else {
                    T::zero()
                };
            }
            LossSide::Target => {
                objective -= spec.ell2(r) / k;
                dout[i] = if inside {
                    -spec.ell2_deriv(r) * link_deriv(link, v, linked) / k
                } else {
                    T::zero()
                };
            }
        }
    }
    objective
}

fn initial_params<T: Scalar>(trainer: &Trainer<T>, link: Link, rng: &mut ChaCha8Rng) -> Vec<T> {
    match trainer {
        Trainer::Poly { basis, .. } => {
            let mut p = vec![T::zero(); basis.len()];
            // Start at the constant function r = 1: intercept 1 under the
            // identity link, 0 under the exponential link.
            if link == Link::Identity && !p.is_empty() {
                p[0] = T::one();
            }
            p
        }
        Trainer::Mlp { dims, .. } => {
            let offsets = layer_offsets(dims);
            let total = trainer.param_count();
            let mut p = vec![T::zero(); total];
            for &(w_off, _b_off, input, output) in &offsets {
                let bound = (6.0 / input as f64).sqrt();
                for w in p[w_off..w_off + input * output].iter_mut() {
                    *w = T::from_config(rng.gen_range(-bound..bound));
                }
            }
            p
        }
    }
}

struct TrainOutcome<T> {
    params: Vec<T>,
    objective: T,
    trace: Vec<T>,
}

/// Full-batch Adam with bias correction and patience-based early stopping.
/// Keeps the best parameters seen, so the recorded objective envelope is
/// non-increasing.
fn train<T: Scalar>(
    trainer: &mut Trainer<T>,
    spec: &DivergenceSpec<T>,
    clamp: (T, T),
    opt: &OptimizerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome<T>> {
    let n_params = trainer.param_count();
    let mut params = initial_params(trainer, spec.link(), rng);
    let mut grad = vec![T::zero(); n_params];
    let mut m1 = vec![T::zero(); n_params];
    let mut m2 = vec![T::zero(); n_params];
    let lr = T::from_config(opt.learning_rate);
    let beta1 = T::from_config(0.9);
    let beta2 = T::from_config(0.999);
    let eps = T::from_config(1e-8);
    let tol = T::from_config(opt.tolerance);

    let mut best_params = params.clone();
    let mut best_obj = T::infinity();
    let mut best_epoch = 0usize;
    let mut trace = Vec::with_capacity(opt.max_epochs.min(4096));
    let mut beta1_pow = T::one();
    let mut beta2_pow = T::one();

    for epoch in 0..opt.max_epochs {
        let obj = trainer.objective_and_grad(spec, clamp, &params, &mut grad);
        if !obj.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite training objective at epoch {epoch}"
            )));
        }
        if obj < best_obj - tol {
            best_obj = obj;
            best_params.copy_from_slice(&params);
            best_epoch = epoch;
        } else if obj < best_obj {
            // Still keep strictly better parameters; just not "progress".
            best_obj = obj;
            best_params.copy_from_slice(&params);
        }
        trace.push(best_obj.min(obj));
        if epoch - best_epoch >= opt.patience {
            break;
        }
        beta1_pow *= beta1;
        beta2_pow *= beta2;
        let corr1 = T::one() - beta1_pow;
        let corr2 = T::one() - beta2_pow;
        for i in 0..n_params {
            let g = grad[i];
            m1[i] = beta1 * m1[i] + (T::one() - beta1) * g;
            m2[i] = beta2 * m2[i] + (T::one() - beta2) * g * g;
            let mhat = m1[i] / corr1;
            let vhat = m2[i] / corr2;
            params[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(TrainOutcome { params: best_params, objective: best_obj, trace })
}

fn fit_capacity<T: Scalar>(
    cfg: &FunctionClassConfig,
    spec: &DivergenceSpec<T>,
    capacity: Capacity,
    xs: ArrayView2<'_, T>,
    xt: ArrayView2<'_, T>,
    rng: &mut ChaCha8Rng,
) -> Result<FittedFunction<T>> {
    let clamp = (T::from_config(cfg.clamp_min), T::from_config(cfg.clamp_max));
    let mut trainer = Trainer::new(capacity, xs, xt);
    let outcome = train(&mut trainer, spec, clamp, &cfg.optimizer, rng)?;
    let arch = trainer.architecture();
    Ok(FittedFunction {
        arch,
        params: outcome.params,
        link: spec.link(),
        clamp_min: clamp.0,
        clamp_max: clamp.1,
        input_dim: xs.ncols(),
        objective: outcome.objective,
        capacity,
        objective_trace: outcome.trace,
    })
}

fn check_clamp_against_domain<T: Scalar>(
    cfg: &FunctionClassConfig,
    spec: &DivergenceSpec<T>,
) -> Result<()> {
    if let Some(dm) = spec.domain_min() {
        let cmin = T::from_config(cfg.clamp_min);
        let ok = if dm == T::zero() { cmin > T::zero() } else { cmin >= dm };
        if !ok {
            return Err(Error::Config(format!(
                "clamp floor {} is below the domain of the {} losses",
                cfg.clamp_min,
                spec.name()
            )));
        }
    }
    Ok(())
}

/// Score every capacity by held-out empirical objective averaged over folds
/// (both samples split fold-wise) and return the index of the best one in
/// `cfg.candidates(input_dim)` order; ties break toward the smaller capacity.
pub fn cv_select<T: Scalar>(
    cfg: &FunctionClassConfig,
    spec: &DivergenceSpec<T>,
    x_source: ArrayView2<'_, T>,
    x_target: ArrayView2<'_, T>,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, Vec<f64>)> {
    cfg.validate()?;
    check_clamp_against_domain(cfg, spec)?;
    let candidates = cfg.candidates(x_source.ncols());
    if candidates.len() == 1 {
        return Ok((0, vec![f64::NAN]));
    }
    let k = cfg.cv_folds;
    if k < 2 {
        return Err(Error::Config("cv_folds must be at least 2".into()));
    }
    let n = x_source.nrows();
    let m = x_target.nrows();
    if n < k || m < k {
        return Err(Error::Config(format!(
            "cv_folds = {k} leaves an empty fold (n = {n}, m = {m})"
        )));
    }
    let mut src_idx: Vec<usize> = (0..n).collect();
    let mut tgt_idx: Vec<usize> = (0..m).collect();
    shuffle(&mut src_idx, rng);
    shuffle(&mut tgt_idx, rng);

    let mut scores = vec![0.0f64; candidates.len()];
    for fold in 0..k {
        let (s_test, s_train) = split_fold(&src_idx, fold, k);
        let (t_test, t_train) = split_fold(&tgt_idx, fold, k);
        let xs_train = select_rows(x_source, &s_train);
        let xt_train = select_rows(x_target, &t_train);
        let xs_test = select_rows(x_source, &s_test);
        let xt_test = select_rows(x_target, &t_test);
        for (ci, &cap) in candidates.iter().enumerate() {
            let fit = fit_capacity(cfg, spec, cap, xs_train.view(), xt_train.view(), rng)?;
            let rs = fit.evaluate(xs_test.view())?;
            let rt = fit.evaluate(xt_test.view())?;
            let mut held = T::zero();
            let ns = T::from_usize(rs.len()).expect("fold size fits scalar");
            let ms = T::from_usize(rt.len()).expect("fold size fits scalar");
            for &r in rs.iter() {
                held += spec.ell1(r) / ns;
            }
            for &r in rt.iter() {
                held -= spec.ell2(r) / ms;
            }
            scores[ci] += held.to_report() / k as f64;
        }
    }
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] < scores[best] {
            best = i;
        }
    }
    Ok((best, scores))
}

fn shuffle(idx: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
}

fn split_fold(idx: &[usize], fold: usize, k: usize) -> (Vec<usize>, Vec<usize>) {
    let n = idx.len();
    let lo = fold * n / k;
    let hi = (fold + 1) * n / k;
    let test = idx[lo..hi].to_vec();
    let mut train = Vec::with_capacity(n - test.len());
    train.extend_from_slice(&idx[..lo]);
    train.extend_from_slice(&idx[hi..]);
    (test, train)
}

fn select_rows<T: Scalar>(x: ArrayView2<'_, T>, rows: &[usize]) -> Array2<T> {
    let mut out = Array2::zeros((rows.len(), x.ncols()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&x.row(r));
    }
    out
}

/// Fit by empirical risk minimization: select a capacity by cross-validation
/// (when the grid has more than one point), then refit on the full data.
pub fn fit_erm<T: Scalar>(
    cfg: &FunctionClassConfig,
    spec: &DivergenceSpec<T>,
    x_source: ArrayView2<'_, T>,
    x_target: ArrayView2<'_, T>,
    rng: &mut ChaCha8Rng,
) -> Result<FittedFunction<T>> {
    cfg.validate()?;
    check_clamp_against_domain(cfg, spec)?;
    if x_source.ncols() != x_target.ncols() {
        return Err(Error::Shape(format!(
            "source has {} columns, target has {}",
            x_source.ncols(),
            x_target.ncols()
        )));
    }
    if x_source.nrows() == 0 || x_target.nrows() == 0 {
        return Err(Error::Config("both samples must be non-empty".into()));
    }
    let candidates = cfg.candidates(x_source.ncols());
    let chosen = if candidates.len() == 1 {
        candidates[0]
    } else {
        let (idx, _) = cv_select(cfg, spec, x_source, x_target, rng)?;
        candidates[idx]
    };
    fit_capacity(cfg, spec, chosen, x_source, x_target, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::stream_rng;
    use crate::divergence::DivergenceId;
    use ndarray::Array2;
    use rand::Rng;

    fn uniform_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = stream_rng(seed, 0);
        Array2::from_shape_fn((n, d), |_| rng.gen::<f64>())
    }

    fn small_cfg(kind: FunctionKind) -> FunctionClassConfig {
        let mut cfg = match kind {
            FunctionKind::Mlp => FunctionClassConfig::mlp_default(),
            FunctionKind::PolySieve => FunctionClassConfig::poly_default(),
        };
        cfg.degree_or_width_candidates = vec![if kind == FunctionKind::Mlp { 8 } else { 2 }];
        cfg.depth_candidates = vec![1];
        cfg.optimizer.max_epochs = 400;
        cfg
    }

    #[test]
    fn evaluate_applies_link_and_clamp() {
        // Zero-parameter-trained constant sieve through the exp link is 1.
        let xs = uniform_matrix(40, 2, 1);
        let xt = uniform_matrix(30, 2, 2);
        let spec = DivergenceSpec::<f64>::new(DivergenceId::Kl);
        let mut cfg = small_cfg(FunctionKind::PolySieve);
        cfg.optimizer.max_epochs = 1;
        let f = fit_erm(&cfg, &spec, xs.view(), xt.view(), &mut stream_rng(3, 0)).unwrap();
        let vals = f.evaluate(xs.view()).unwrap();
        let (lo, hi) = f.clamp();
        assert!(vals.iter().all(|&v| v >= lo && v <= hi));
    }

    #[test]
    fn identical_samples_fit_near_one() {
        let xs = uniform_matrix(600, 2, 11);
        let xt = uniform_matrix(600, 2, 11); // identical draw stream settings
        let spec = DivergenceSpec::<f64>::new(DivergenceId::Kl);
        let cfg = small_cfg(FunctionKind::Mlp);
        let f = fit_erm(&cfg, &spec, xs.view(), xt.view(), &mut stream_rng(5, 0)).unwrap();
        let vals = f.evaluate(xs.view()).unwrap();
        let dev: f64 =
            vals.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(dev.sqrt() < 0.1, "L2 deviation from 1 was {}", dev.sqrt());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let specs = [
            DivergenceId::Kl,
            DivergenceId::ReverseKl,
            DivergenceId::Pearson,
            DivergenceId::Hellinger,
        ];
        for kind in [FunctionKind::Mlp, FunctionKind::PolySieve] {
            for id in specs {
                let spec = DivergenceSpec::<f64>::new(id);
                let xs = uniform_matrix(17, 3, 21);
                let xt = uniform_matrix(13, 3, 22);
                let cap = match kind {
                    FunctionKind::Mlp => Capacity::Mlp { width: 4, depth: 2 },
                    FunctionKind::PolySieve => Capacity::Degree(2),
                };
                let mut trainer = Trainer::new(cap, xs.view(), xt.view());
                let mut rng = stream_rng(7, 0);
                let mut params = initial_params(&trainer, spec.link(), &mut rng);
                // Nudge away from exact zeros so ReLUs have both signs.
                for (i, p) in params.iter_mut().enumerate() {
                    *p += 0.05 * ((i % 7) as f64 - 3.0) / 7.0;
                }
                let clamp = (1e-3, 1e3);
                let mut grad = vec![0.0; params.len()];
                trainer.objective_and_grad(&spec, clamp, &params, &mut grad);
                let h = 2e-6;
                for i in (0..params.len()).step_by(3) {
                    let mut plus = params.clone();
                    plus[i] += h;
                    let mut minus = params.clone();
                    minus[i] -= h;
                    let mut scratch = vec![0.0; params.len()];
                    let fp = trainer.objective_and_grad(&spec, clamp, &plus, &mut scratch);
                    let fm = trainer.objective_and_grad(&spec, clamp, &minus, &mut scratch);
                    let fd = (fp - fm) / (2.0 * h);
                    let denom = fd.abs().max(1e-6);
                    assert!(
                        ((grad[i] - fd) / denom).abs() < 1e-4,
                        "{id:?}/{kind:?} param {i}: analytic {} vs fd {fd}",
                        grad[i]
                    );
                }
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let xs = uniform_matrix(80, 2, 31);
        let xt = uniform_matrix(60, 2, 32);
        let spec = DivergenceSpec::<f64>::new(DivergenceId::Kl);
        let cfg = small_cfg(FunctionKind::Mlp);
        let a = fit_erm(&cfg, &spec, xs.view(), xt.view(), &mut stream_rng(9, 4)).unwrap();
        let b = fit_erm(&cfg, &spec, xs.view(), xt.view(), &mut stream_rng(9, 4)).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(a.objective_value(), b.objective_value());
    }

    #[test]
    fn objective_trace_is_non_increasing() {
        let xs = uniform_matrix(120, 2, 41);
        let xt = uniform_matrix(90, 2, 42);
        let spec = DivergenceSpec::<f64>::new(DivergenceId::Pearson);
        let cfg = small_cfg(FunctionKind::Mlp);
        let f = fit_erm(&cfg, &spec, xs.view(), xt.view(), &mut stream_rng(11, 0)).unwrap();
        let trace = f.objective_trace();
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn cv_single_candidate_is_index_zero() {
        let xs = uniform_matrix(30, 2, 51);
        let xt = uniform_matrix(30, 2, 52);
        let spec = DivergenceSpec::<f64>::new(DivergenceId::Kl);
        let cfg = small_cfg(FunctionKind::Mlp);
        let (idx, _) = cv_select(&cfg, &spec, xs.view(), xt.view(), &mut stream_rng(1, 0)).unwrap();
        assert_eq!(idx, 0);
    }

    #[test]
    fn cv_ties_break_to_smaller_capacity() {
        // Two identical candidates produce identical scores.
        let xs = uniform_matrix(45, 2, 61);
        let xt = uniform_matrix(45, 2, 62);
        let spec = DivergenceSpec::<f64>::new(DivergenceId::Pearson);
        let mut cfg = small_cfg(FunctionKind::PolySieve);
        cfg.degree_or_width_candidates = vec![2, 2];
        cfg.optimizer.max_epochs = 60;
        let (idx, scores) =
            cv_select(&cfg, &spec, xs.view(), xt.view(), &mut stream_rng(13, 0)).unwrap();
        assert_eq!(idx, 0, "scores: {scores:?}");
    }

    #[test]
    fn empty_capacity_grid_is_a_config_error() {
        let mut cfg = small_cfg(FunctionKind::Mlp);
        cfg.degree_or_width_candidates.clear();
        let xs = uniform_matrix(10, 2, 71);
        let xt = uniform_matrix(10, 2, 72);
        let spec = DivergenceSpec::<f64>::new(DivergenceId::Kl);
        let err = fit_erm(&cfg, &spec, xs.view(), xt.view(), &mut stream_rng(1, 0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn pearson_sieve_matches_closed_form_solve() {
        // The Pearson objective is quadratic in sieve coefficients; the
        // minimizer solves (Bs'Bs/n) beta = Bt' 1 / m.
        let xs = uniform_matrix(400, 1, 81);
        let xt = {
            // Beta(2,1) via inverse CDF: sqrt(U).
            let mut rng = stream_rng(82, 0);
            Array2::from_shape_fn((400, 1), |_| rng.gen::<f64>().sqrt())
        };
        let spec = DivergenceSpec::<f64>::new(DivergenceId::Pearson);
        let mut cfg = small_cfg(FunctionKind::PolySieve);
        cfg.degree_or_width_candidates = vec![2];
        cfg.clamp_min = 1e-4;
        cfg.clamp_max = 1e4;
        cfg.optimizer.max_epochs = 20000;
        cfg.optimizer.patience = 400;
        cfg.optimizer.tolerance = 1e-12;
        let fit = fit_erm(&cfg, &spec, xs.view(), xt.view(), &mut stream_rng(83, 0)).unwrap();

        let basis = PolyBasis::<f64>::build(xs.view(), 2);
        let bs = basis.matrix(xs.view());
        let bt = basis.matrix(xt.view());
        let n = bs.nrows() as f64;
        let m = bt.nrows() as f64;
        let gram = bs.t().dot(&bs) / n;
        let rhs = bt.t().dot(&Array1::from_elem(bt.nrows(), 1.0 / m));
        let beta = crate::linalg::spd_solve(&gram, &rhs).unwrap();
        for (a, b) in fit.params().iter().zip(beta.iter()) {
            assert!((a - b).abs() < 5e-3, "adam {a} vs solve {b}");
        }
    }

    #[test]
    fn model_json_round_trips() {
        let xs = uniform_matrix(25, 2, 91);
        let xt = uniform_matrix(25, 2, 92);
        let spec = DivergenceSpec::<f64>::new(DivergenceId::Kl);
        let mut cfg = small_cfg(FunctionKind::Mlp);
        cfg.optimizer.max_epochs = 30;
        let f = fit_erm(&cfg, &spec, xs.view(), xt.view(), &mut stream_rng(15, 0)).unwrap();
        let back = FittedFunction::<f64>::from_json(&f.to_json()).unwrap();
        assert_eq!(f.params(), back.params());
        let a = f.evaluate(xs.view()).unwrap();
        let b = back.evaluate(xs.view()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let xs = uniform_matrix(20, 2, 95);
        let xt = uniform_matrix(20, 2, 96);
        let spec = DivergenceSpec::<f64>::new(DivergenceId::Kl);
        let mut cfg = small_cfg(FunctionKind::Mlp);
        cfg.optimizer.max_epochs = 10;
        let f = fit_erm(&cfg, &spec, xs.view(), xt.view(), &mut stream_rng(1, 0)).unwrap();
        let bad = uniform_matrix(5, 3, 97);
        assert!(matches!(f.evaluate(bad.view()), Err(Error::Shape(_))));
    }

    #[test]
    fn exponent_enumeration_is_graded_and_capped() {
        let x = uniform_matrix(5, 3, 99);
        let basis = PolyBasis::<f64>::build(x.view(), 2);
        assert_eq!(basis.len(), 10); // C(5, 2)
        assert_eq!(basis.exponents[0], vec![0, 0, 0]);
        let big = PolyBasis::<f64>::build(uniform_matrix(5, 20, 100).view(), 3);
        assert_eq!(big.len(), MAX_BASIS);
    }

    #[test]
    fn f32_training_runs() {
        let mut rng = stream_rng(33, 0);
        let xs = Array2::<f32>::from_shape_fn((60, 2), |_| rng.gen::<f32>());
        let xt = Array2::<f32>::from_shape_fn((60, 2), |_| rng.gen::<f32>());
        let spec = DivergenceSpec::<f32>::new(DivergenceId::Pearson);
        let mut cfg = small_cfg(FunctionKind::PolySieve);
        cfg.optimizer.max_epochs = 100;
        let f = fit_erm(&cfg, &spec, xs.view(), xt.view(), &mut stream_rng(3, 0)).unwrap();
        assert!(f.objective_value().is_finite());
    }
}
