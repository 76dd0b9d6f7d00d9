//! Floating-point scalar abstraction for the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar: f32 or f64.
///
/// The loss catalog, the function classes and their optimizer, and the inner
/// EL solver are generic over this trait; the pipeline fixes `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum<Self>
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
    + ndarray::ScalarOperand
    + serde::Serialize
    + for<'de> serde::Deserialize<'de>
{
    /// Lossy conversion from f64, for constants and config values.
    fn from_config(v: f64) -> Self {
        Self::from_f64(v).expect("finite config value representable in scalar type")
    }

    /// Lossy conversion to f64, for reporting.
    fn to_report(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
