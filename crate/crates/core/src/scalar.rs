//! Scalar abstraction shared by every routine in the crate.

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;

/// Real floating-point scalar (`f32` or `f64`).
pub trait Real: RealField + Copy {
    /// Converts an `f64` literal into this scalar type.
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Lossy conversion to `f64` for reporting.
    fn as_f64(self) -> f64 {
        self.to_subset().unwrap_or(f64::NAN)
    }

    /// Unit roundoff of the type.
    fn eps() -> Self {
        Self::default_epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex scalar over `T`.
pub type C<T> = Complex<T>;
/// Dense real matrix.
pub type Mat<T> = DMatrix<T>;
/// Dense complex matrix.
pub type CMat<T> = DMatrix<Complex<T>>;
/// Dense real vector.
pub type Vector<T> = DVector<T>;

/// Builds a complex number from real parts.
pub fn cx<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

/// The imaginary unit.
pub fn imag_unit<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::one())
}
