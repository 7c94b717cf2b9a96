//! Scalar abstraction for the vector algebra.
//!
//! The shift operators and their right inverses only need field arithmetic,
//! so vectors are generic over [`Scalar`]. Floating types are the working
//! types; exact rationals are supported so that the algebraic identities of
//! the right inverses can be checked with no round-off at all.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Field element usable as a sequence coordinate.
pub trait Scalar:
    Num + Signed + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// Magnitude as `f64`, used for F-norm evaluation.
    fn magnitude(&self) -> f64 {
        self.abs().to_f64().unwrap_or(f64::INFINITY)
    }

    /// Lossy conversion from `f64`; exact for dyadic rationals.
    fn from_real(v: f64) -> Self {
        Self::from_f64(v).expect("scalar conversion from f64")
    }

    /// Exact integer power by repeated squaring (`exp` may be negative).
    fn powi_exact(self, exp: i32) -> Self {
        let mut base = if exp < 0 { Self::one() / self } else { self };
        let mut e = exp.unsigned_abs();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
impl Scalar for Ratio<i64> {}
impl Scalar for Ratio<i128> {}
