//! Numeric abstraction shared by the model, the performance formulas and the
//! solver.
//!
//! Everything that only adds, multiplies, divides and compares is written
//! against [`Scalar`], so the same code evaluates in `f64` for simulation,
//! `f32` for compact storage and [`num_rational::Ratio<i128>`] when a test
//! needs exact equality.

use std::fmt::{Debug, Display};

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// A copyable, totally-ordered-in-practice number.
///
/// NaN is never produced by the formulas in this crate for validated inputs;
/// comparisons assume it away.
pub trait Scalar:
    Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal. Rationals approximate it by continued
    /// fractions; use [`ratio`] when the value is a known fraction.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).unwrap_or_else(|| panic!("{value} is not representable"))
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl<T> Scalar for T where
    T: Num
        + Copy
        + PartialOrd
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// `numer / denom` evaluated in `T`.
pub fn ratio<T: Scalar>(numer: i64, denom: i64) -> T {
    let n = T::from_i64(numer).expect("numerator fits");
    let d = T::from_i64(denom).expect("denominator fits");
    n / d
}

/// Ordering for scalars that are known not to be NaN.
pub fn cmp<T: Scalar>(a: &T, b: &T) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn ratio_is_exact_for_rationals() {
        let r: Ratio<i128> = ratio(5, 1000);
        assert_eq!(r, Ratio::new(1, 200));
        let f: f64 = ratio(5, 1000);
        assert_eq!(f, 0.005);
    }

    #[test]
    fn lit_round_trips_simple_decimals() {
        let r: Ratio<i128> = Scalar::lit(0.25);
        assert_eq!(r, Ratio::new(1, 4));
        assert_eq!(<f32 as Scalar>::lit(1.5), 1.5f32);
    }

    #[test]
    fn min_max() {
        assert_eq!(3.0f64.max_of(4.0), 4.0);
        assert_eq!(3.0f64.min_of(4.0), 3.0);
    }
}
