//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failures surfaced by the library.
///
/// `Config`/`Parse`/`Shape`/`Contract` indicate caller mistakes (CLI exit
/// code 1); the remaining variants indicate numeric or statistical failures
/// (CLI exit code 2).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Zero lies outside the convex hull of the moment rows; the EL inner
    /// problem is infeasible at this parameter value. Distinct from plain
    /// non-convergence.
    #[error("zero is outside the convex hull of the moment rows")]
    ConvexHullViolation,

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("inference failed: {0}")]
    Inference(String),

    /// API misuse, e.g. requesting a Wilks interval for a DRW fit.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the failure is a user/configuration problem rather than a
    /// numeric one.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::Shape(_) | Error::Contract(_) | Error::Io(_)
        )
    }
}
