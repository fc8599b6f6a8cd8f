//! Floating-point abstraction shared by every module.

use std::fmt::{Debug, Display, LowerExp};

use num_complex::Complex;
use num_traits::{Float, FloatConst};
use rustfft::FftNum;

/// Real scalar the library is generic over (`f32` or `f64`).
///
/// `Float` and `FftNum` both bring an `abs`; call `Float::abs(x)` in generic
/// code to avoid the ambiguity.
pub trait Real:
    Float + FloatConst + FftNum + crate::linalg::BandScalar + Default + Display + LowerExp + Debug + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("literal representable")
    }

    /// Converts a count or index into `Self`.
    #[inline]
    fn of(n: usize) -> Self {
        <Self as num_traits::NumCast>::from(n).expect("count representable")
    }

    /// Widens to `f64` for reporting.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float + FloatConst + FftNum + crate::linalg::BandScalar + Default + Display + LowerExp + Debug + Send + Sync + 'static
{
}

/// `e^{i t}`.
#[inline]
pub fn cis<T: Real>(t: T) -> Complex<T> {
    Complex::new(t.cos(), t.sin())
}

/// Shorthand for a complex literal.
#[inline]
pub fn c<T: Real>(re: f64, im: f64) -> Complex<T> {
    Complex::new(T::lit(re), T::lit(im))
}

/// Absolute value without the `Float`/`Signed` method ambiguity.
#[inline]
pub fn fabs<T: Real>(x: T) -> T {
    Float::abs(x)
}
