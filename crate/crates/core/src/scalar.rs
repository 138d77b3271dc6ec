//! Floating-point scalar abstraction used by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Real scalar the transport and shape code is generic over (`f32` or `f64`).
pub trait Scalar: Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Converts an `f64` literal. Panics only for values the type cannot represent at all.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).unwrap_or_else(Self::infinity)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub(crate) fn dist2<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

/// `a . (b - c)` without materializing the difference.
#[inline]
pub(crate) fn dot_diff<T: Scalar>(a: &[T], b: &[T], c: &[T]) -> T {
    a.iter().zip(b.iter().zip(c)).fold(T::zero(), |acc, (&x, (&y, &z))| acc + x * (y - z))
}
