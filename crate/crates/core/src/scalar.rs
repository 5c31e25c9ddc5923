//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra as na;
use num_traits as nt;

/// Real floating point type usable throughout the toolkit (`f32` or `f64`).
///
/// Arithmetic and elementary functions come from [`na::RealField`];
/// conversions and constants come from `num-traits`.
pub trait Scalar:
    na::RealField + Copy + nt::FromPrimitive + nt::ToPrimitive + nt::FloatConst + Display + Debug + Send + Sync
{
    /// Converts an `f64` literal. Panics only for values not representable at all.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn infinity() -> Self {
        Self::of(f64::INFINITY)
    }

    #[inline]
    #[allow(clippy::eq_op)]
    fn is_nan(self) -> bool {
        self != self
    }

    /// Machine epsilon of the concrete type.
    fn eps() -> Self;
}

impl Scalar for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Scalar for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}

/// Complex number over a [`Scalar`].
pub type Complex<T> = na::Complex<T>;

#[cfg(test)]
mod tests {
    use super::*;

    fn generic_hypot<T: Scalar>(a: T, b: T) -> T {
        (a * a + b * b).sqrt()
    }

    #[test]
    fn works_for_both_widths() {
        assert_eq!(generic_hypot(3.0f32, 4.0), 5.0);
        assert_eq!(generic_hypot(3.0f64, 4.0), 5.0);
        assert!(f64::infinity().is_infinite());
        assert!(f32::of(f64::NAN).is_nan());
        assert_eq!(f32::of(0.5).as_f64(), 0.5);
    }
}
