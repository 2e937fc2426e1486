//! Floating-point scalar abstraction shared by the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Real-valued scalar used by BM25 scoring, cosine similarity and metrics.
///
/// Implemented for `f32` and `f64`. Wire formats and run records use `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from a count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as float")
    }

    /// Conversion from an `f64` constant.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Ratio with the "empty denominator is a perfect score" convention.
pub(crate) fn ratio_or_one<S: Scalar>(num: S, den: S) -> S {
    if den == S::zero() {
        S::one()
    } else {
        num / den
    }
}

/// Harmonic mean; zero when both inputs are zero.
pub(crate) fn harmonic<S: Scalar>(p: S, r: S) -> S {
    if p + r == S::zero() {
        S::zero()
    } else {
        S::lit(2.0) * p * r / (p + r)
    }
}
