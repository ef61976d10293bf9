//! Scalar abstraction for the numeric core.
//!
//! All kernels, eigen-solvers and estimators are generic over a floating
//! point type implementing [`Scalar`]. Concrete aliases for `f64` (and the
//! `f32` variants where they make sense) live at the crate root.

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point scalar usable throughout the crate.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from `f64` literals and config values.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to scalar")
    }

    /// Conversion from counts and indices.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to scalar")
    }

    /// Value as `f64`, for reporting and for statistics backends.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Draw a uniform in the half-open interval `(0, 1]`.
///
/// The open lower end keeps jittered spacings strictly above cell edges
/// (and in particular strictly above the hard core).
pub fn uniform_oc<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let u: f64 = rng.gen::<f64>(); // [0, 1)
    T::of(1.0 - u)
}

/// Draw a uniform in `[0, 1)`.
pub fn uniform_co<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::of(rng.gen::<f64>())
}

/// Draw a standard normal variate.
pub fn std_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let x: f64 = StandardNormal.sample(rng);
    T::of(x)
}

/// Strict elementwise tolerance (1e-12 for `f64`, scaled up for coarser types).
pub fn tol_strict<T: Scalar>() -> T {
    T::of(1e-12).max(T::epsilon() * T::of(64.0))
}

/// Stationarity / consistency tolerance (1e-10 for `f64`).
pub fn tol_stationary<T: Scalar>() -> T {
    T::of(1e-10).max(T::epsilon() * T::of(4096.0))
}
