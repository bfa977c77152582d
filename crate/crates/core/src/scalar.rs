//! Scalar abstraction for the math core.
//!
//! Geometry and the numeric kernels are generic over [`Scalar`] so they run
//! at f32 or f64; the crate root pins concrete aliases for pipeline code.

use num_traits::{Float, FromPrimitive, NumAssign};
use std::fmt::Debug;

/// Floating-point scalar usable by the math core.
///
/// Blanket-implemented for every type with the listed bounds, which in
/// practice means `f32` and `f64`.
pub trait Scalar: Float + FromPrimitive + NumAssign + Debug + Default + Send + Sync + 'static {
    /// Converts an `f64` literal. Panics on values unrepresentable as `Self`,
    /// which cannot happen for the finite constants used in this crate.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    fn to_f64_lossy(self) -> f64;
}

impl<T> Scalar for T
where
    T: Float + FromPrimitive + NumAssign + Debug + Default + Send + Sync + 'static,
{
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("float convertible to f64")
    }
}
