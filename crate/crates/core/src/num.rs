//! Scalar abstraction shared by the deterministic modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the model math is written against: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }

    /// Natural log of the gamma function.
    fn ln_gamma(self) -> Self {
        Self::lit(statrs::function::gamma::ln_gamma(self.as_f64()))
    }

    /// `ln n!`
    fn ln_factorial(n: usize) -> Self {
        Self::from_usize_lossy(n + 1).ln_gamma()
    }

    /// `tol` in f64, raised to a small multiple of machine epsilon when the
    /// scalar type cannot resolve it.
    fn tolerance(tol: f64) -> Self {
        Self::lit(tol).max(Self::epsilon() * Self::lit(64.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `x ln(x / y)` with the conventions `0 ln 0 = 0 ln(0/0) = 0` and
/// `x ln(x/0) = +inf` for `x > 0`.
pub(crate) fn xlogx_over<S: Real>(x: S, y: S) -> S {
    if x <= S::zero() {
        S::zero()
    } else if y <= S::zero() {
        S::infinity()
    } else {
        x * (x / y).ln()
    }
}

/// Clamps round-off negatives (above `-tol`) to zero.
pub(crate) fn clamp_small_negative<S: Real>(x: S, tol: S) -> S {
    if x < S::zero() && x > -tol {
        S::zero()
    } else {
        x
    }
}
