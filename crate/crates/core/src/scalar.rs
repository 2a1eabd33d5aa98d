//! Scalar abstraction for the numeric kernels.
//!
//! Metrics, rewards, and synthetic generators are generic over [`Scalar`] so
//! the same code runs in `f32` or `f64`. Concrete aliases for the common
//! `f64` instantiation live at the crate root.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` constant (tolerance, coefficient, count) into `S`.
#[inline]
pub fn scalar<S: Scalar>(value: f64) -> S {
    S::from_f64(value).expect("f64 constant representable in scalar type")
}

/// Converts a count into `S`.
#[inline]
pub fn scalar_from_usize<S: Scalar>(value: usize) -> S {
    S::from_usize(value).expect("count representable in scalar type")
}
