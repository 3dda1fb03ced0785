//! Arithmetic shared by the floating-point and exact code paths.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// A field the consensus kernels can run over: `f64` or exact `BigRational`.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Exact conversion where the type allows it. Panics on non-finite input.
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    /// `1/m`.
    fn recip_of(m: u64) -> Self;
    fn abs_val(&self) -> Self;
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn recip_of(m: u64) -> Self {
        1.0 / m as f64
    }
    fn abs_val(&self) -> Self {
        self.abs()
    }
}

impl Scalar for BigRational {
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite value")
    }
    fn to_f64(&self) -> f64 {
        ratio_to_f64(self)
    }
    fn recip_of(m: u64) -> Self {
        BigRational::new(BigInt::one(), BigInt::from(m))
    }
    fn abs_val(&self) -> Self {
        self.abs()
    }
}

/// Rounds a rational to the nearest double, saturating to +-inf on overflow.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    if let Some(v) = ToPrimitive::to_f64(r) {
        return v;
    }
    // Very large numerator/denominator: shift both to a comparable scale.
    let num = r.numer();
    let den = r.denom();
    let shift = num.bits() as i64 - den.bits() as i64;
    let scaled = if shift > 0 {
        BigRational::new(num.clone(), den.clone() << (shift as usize))
    } else {
        BigRational::new(num.clone() << ((-shift) as usize), den.clone())
    };
    let m = ToPrimitive::to_f64(&scaled).unwrap_or(f64::NAN);
    m * 2f64.powi(shift.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huge_ratios_do_not_collapse_to_nan() {
        let big = BigInt::one() << 5000usize;
        assert_eq!(ratio_to_f64(&BigRational::new(big.clone() * 3, big.clone() * 4)), 0.75);
        assert_eq!(ratio_to_f64(&BigRational::new(big.clone(), BigInt::from(1))), f64::INFINITY);
        assert_eq!(ratio_to_f64(&BigRational::new(-BigInt::from(7), big)), -0.0);
    }

    #[test]
    fn dyadic_values_convert_exactly() {
        for x in [0.1, -3.75, 1e-300, 6.02e23] {
            assert_eq!(Scalar::to_f64(&<BigRational as Scalar>::from_f64(x)), x);
        }
        assert_eq!(Scalar::to_f64(&<BigRational as Scalar>::recip_of(8)), 0.125);
    }

    #[test]
    #[should_panic(expected = "finite")]
    fn nan_has_no_exact_value() {
        let _ = <BigRational as Scalar>::from_f64(f64::NAN);
    }
}
