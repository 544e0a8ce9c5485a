//! Scalar abstraction used by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the model can be evaluated in.
pub trait Scalar:
    'static
    + Float
    + FromPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
{
    /// Converts an `f64` literal. Every value used in the crate is representable
    /// (possibly rounded) in both `f32` and `f64`.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    /// Relative tolerance `base`, widened to a few ulps when the type cannot resolve it.
    fn tol(base: f64) -> Self {
        Self::lit(base).max(Self::epsilon() * Self::lit(64.0))
    }

    fn half() -> Self {
        Self::lit(0.5)
    }

    fn two() -> Self {
        Self::lit(2.0)
    }

    /// Positive part `max(x, 0)`.
    fn pos(self) -> Self {
        if self > Self::zero() {
            self
        } else {
            Self::zero()
        }
    }

    /// Negative part `min(x, 0)`.
    fn neg_part(self) -> Self {
        if self < Self::zero() {
            self
        } else {
            Self::zero()
        }
    }

    /// Clamp into `[lo, hi]`; `lo` wins if the interval is inverted.
    fn clamp_to(self, lo: Self, hi: Self) -> Self {
        self.min(hi).max(lo)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
