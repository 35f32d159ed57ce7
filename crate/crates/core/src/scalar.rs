//! Scalar abstraction for the numeric kernels.
//!
//! Everything numeric in this crate is generic over [`Real`], which is any
//! IEEE float with the conversions the kernels need. `f32` and `f64` both
//! qualify; the crate-root aliases pin `f64` as the working precision for
//! training and compression.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar usable by every kernel in this crate.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Debug + Display + Default + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Debug + Display + Default + 'static
{
}

/// Cast an `f64` constant into the working scalar type.
///
/// Panics only if `T` cannot represent any `f64` at all, which no `Real`
/// implementor does; `f64 -> f32` rounds.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant must convert into the scalar type")
}

/// Cast a count into the working scalar type.
#[inline]
pub fn real_of_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("usize must convert into the scalar type")
}
