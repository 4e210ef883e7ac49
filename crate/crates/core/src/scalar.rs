//! Scalar abstraction shared by the linear-algebra, measurement, geometry and
//! state-catalog layers.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable as the component type of complex operators.
///
/// Implemented for `f32` and `f64`. The tolerances scale with the precision of
/// the type: the `f64` values are the library defaults.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Hermiticity and unit-trace tolerance.
    fn herm_tol() -> Self;
    /// Floor allowed on the smallest eigenvalue of a positive operator.
    fn psd_tol() -> Self;
    /// Zero test used by the geometric kernels.
    fn geom_eps() -> Self;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Real for f64 {
    fn herm_tol() -> Self {
        1e-9
    }
    fn psd_tol() -> Self {
        1e-8
    }
    fn geom_eps() -> Self {
        1e-9
    }
}

impl Real for f32 {
    fn herm_tol() -> Self {
        1e-4
    }
    fn psd_tol() -> Self {
        1e-4
    }
    fn geom_eps() -> Self {
        1e-4
    }
}
