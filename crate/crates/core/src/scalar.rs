//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar the models and optimizers are written against: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `max(x, 0)^2`, continuously differentiable.
#[inline]
pub(crate) fn relu_sq<T: Real>(x: T) -> T {
    if x > T::zero() {
        x * x
    } else {
        T::zero()
    }
}

/// Derivative of [`relu_sq`].
#[inline]
pub(crate) fn relu_sq_grad<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::lit(2.0) * x
    } else {
        T::zero()
    }
}
