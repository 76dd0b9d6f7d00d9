//! Estimation and empirical-likelihood inference for general estimating
//! equations under covariate-shift transfer learning.
//!
//! A source sample carries covariate/response pairs, a target sample carries
//! covariates only, and the two share the conditional law of the response.
//! Parameters of the target population defined through moment conditions are
//! estimated by combining
//!
//! * divergence-based density-ratio estimation ([`ratio`]),
//! * conditional-density estimation with multiple imputation ([`conddens`]),
//! * an orthogonal moment construction robust to nuisance error ([`moments`]),
//! * profile empirical likelihood with Wilks or bootstrap inference ([`el`]).
//!
//! The numeric kernels (loss pairs, function classes, the inner EL solver,
//! derivative-free optimizers) are generic over the scalar type through
//! [`scalar::Scalar`]; the statistical pipeline instantiates them at [`Real`].
//! [`harness`] reproduces the Monte-Carlo simulation protocol and [`cli`]
//! wires everything into a command-line tool.

pub mod cli;
pub mod conddens;
pub mod data;
pub mod divergence;
pub mod el;
pub mod error;
pub mod funclass;
pub(crate) mod linalg;
pub mod harness;
pub mod moments;
pub mod optim;
pub mod ratio;
pub mod scalar;

pub use error::{Error, Result};

/// Scalar type used by the statistical pipeline.
pub type Real = f64;

/// Divergence loss pair at pipeline precision.
pub type DivergenceSpec = divergence::DivergenceSpec<Real>;
/// Trained function approximator at pipeline precision.
pub type FittedFunction = funclass::FittedFunction<Real>;
// (ElSolution alias added once the el module lands)

