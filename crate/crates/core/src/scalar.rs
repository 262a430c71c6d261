//! Numeric abstraction shared by every load, cost and rate in the crate.
//!
//! Loads are real-valued percentage points. The optimizers only ever need
//! ordered field arithmetic plus `ceil`, so everything is written against
//! [`Scalar`] and instantiated for `f64` (the default, see the aliases at
//! the crate root) or `f32`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Absolute slack used when comparing objective values and checking
    /// constraint satisfaction.
    fn tolerance() -> Self;

    /// Converts a literal. Panics only if the value is not representable,
    /// which cannot happen for the finite constants used in this crate.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `a < b` beyond tolerance.
    #[inline]
    fn definitely_lt(self, other: Self) -> bool {
        self < other - Self::tolerance() * (Self::one() + other.abs().max(self.abs()))
    }

    #[inline]
    fn approx_eq(self, other: Self) -> bool {
        !self.definitely_lt(other) && !other.definitely_lt(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn tolerance() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    #[inline]
    fn tolerance() -> Self {
        1e-5
    }
}

/// Sum of an iterator of scalars without requiring `Sum` on references.
pub(crate) fn total<S: Scalar>(it: impl IntoIterator<Item = S>) -> S {
    it.into_iter().fold(S::zero(), |acc, x| acc + x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerant_comparison() {
        assert!(1.0f64.definitely_lt(1.1));
        assert!(!1.0f64.definitely_lt(1.0 + 1e-12));
        assert!(0.1f64 + 0.2 != 0.3 && (0.1f64 + 0.2).approx_eq(0.3));
        assert!((0.1f32 + 0.2).approx_eq(0.3));
    }

    #[test]
    fn literals() {
        assert_eq!(f32::lit(2.5), 2.5f32);
        assert_eq!(f64::from_count(7), 7.0);
    }
}
