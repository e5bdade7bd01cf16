//! Scalar abstractions shared by the expression graph, the envelopes and the
//! interior-point solver.
//!
//! `Scalar` is the minimal ring-like interface needed to build and evaluate
//! polynomial constraints; it is implemented for `f32`, `f64` and exact
//! `BigRational`. `Real` adds the transcendental operations the solver needs.

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, Num, Signed, ToPrimitive, Zero};

pub trait Scalar:
    Num + Neg<Output = Self> + Clone + PartialOrd + Debug + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;

    fn abs_val(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn max_val(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_val(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(&self) -> f64 {
        *self as f64
    }
}

/// Exact rationals. `from_f64` is exact for every finite double; non-finite
/// input maps to zero, which only matters for infinite bounds that exact
/// evaluation never touches.
impl Scalar for BigRational {
    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).unwrap_or_else(BigRational::zero)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn abs_val(&self) -> Self {
        Signed::abs(self)
    }
}

/// Floating-point scalars usable by the interior-point solver.
pub trait Real: Scalar + Float + Copy {
    fn cast(v: f64) -> Self {
        <Self as Scalar>::from_f64(v)
    }
}

impl Real for f64 {}
impl Real for f32 {}

/// Builds an exact rational from an integer ratio.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
