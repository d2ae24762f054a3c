//! Scalar abstraction for the numerical core.
//!
//! Everything numeric in this crate is generic over [`Real`], which is
//! implemented for `f32` and `f64`. Concrete `f64` aliases live at the
//! crate root.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar used throughout the crate.
///
/// A blanket impl covers every type satisfying the bounds, in practice
/// `f32` and `f64`.
pub trait Real: RealField + FromPrimitive + ToPrimitive + Copy + Default {
    /// Converts an `f64` constant into `Self`.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant")
    }

    /// Lossy view as `f64`, used at I/O boundaries.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl<T> Real for T where T: RealField + FromPrimitive + ToPrimitive + Copy + Default {}
