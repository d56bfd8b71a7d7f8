//! Scalar abstraction shared by the energy arithmetic, the model and the LP engines.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Feasibility tolerance for row and bound checks (f64).
pub const FEAS_TOL: f64 = 1e-7;
/// Distance from {0, 1} below which a binary column counts as integral (f64).
pub const INT_TOL: f64 = 1e-7;
/// Objective comparison tolerance used for pruning and incumbent updates (f64).
pub const OBJ_TOL: f64 = 1e-6;

/// Floating-point scalar the numeric core is generic over.
///
/// Tolerances are associated with the type: `f64` uses the solver-wide
/// values above, `f32` scales them to its precision.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    fn feas_tol() -> Self;
    fn int_tol() -> Self;
    fn obj_tol() -> Self;
    /// Smallest pivot magnitude the simplex accepts.
    fn pivot_tol() -> Self;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn feas_tol() -> Self {
        FEAS_TOL
    }
    fn int_tol() -> Self {
        INT_TOL
    }
    fn obj_tol() -> Self {
        OBJ_TOL
    }
    fn pivot_tol() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    fn feas_tol() -> Self {
        1e-4
    }
    fn int_tol() -> Self {
        1e-4
    }
    fn obj_tol() -> Self {
        1e-3
    }
    fn pivot_tol() -> Self {
        1e-5
    }
}

/// Rounds `x` to the nearest multiple of `quantum`.
pub fn round_to(x: f64, quantum: f64) -> f64 {
    (x / quantum).round() * quantum
}
