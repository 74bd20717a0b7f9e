//! Scalar abstraction shared by every numeric module.
//!
//! All signal-processing code is generic over [`Real`], which is implemented
//! for `f32` and `f64`. Streaming inference usually runs in `f32`, while the
//! oracle, loss and metric code paths are normally evaluated in `f64`.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar usable throughout the crate: `f32` or `f64`.
pub trait Real:
    rustfft::FftNum
    + Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Display
    + LowerExp
    + Debug
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    /// Conversion from a count.
    #[inline]
    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Squared magnitude of a complex value.
#[inline]
pub fn norm_sqr<T: Real>(z: Complex<T>) -> T {
    z.re * z.re + z.im * z.im
}

/// Converts a slice of any [`Real`] into another precision.
pub fn cast_slice<A: Real, B: Real>(xs: &[A]) -> Vec<B> {
    xs.iter().map(|&x| B::lit(x.as_f64())).collect()
}

/// Energy (sum of squares) of a real signal.
pub fn energy<T: Real>(xs: &[T]) -> T {
    xs.iter().map(|&x| x * x).sum()
}

#[inline]
pub fn db_to_amplitude<T: Real>(db: T) -> T {
    T::lit(10.0).powf(db / T::lit(20.0))
}

#[inline]
pub fn db_to_power<T: Real>(db: T) -> T {
    T::lit(10.0).powf(db / T::lit(10.0))
}
