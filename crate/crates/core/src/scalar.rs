//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All model, estimation and design code is written against [`Scalar`] so it
//! can run in `f32` for cheap exploratory sweeps or `f64` for the benchmarks.
//! Random draws are always produced in `f64` and then converted, which keeps
//! the random streams identical across precisions.

use std::fmt::{Debug, Display};

use nalgebra::RealField;

/// Floating point type usable by the crate: `f32` or `f64`.
pub trait Scalar: RealField + Copy + Default + Debug + Display + Send + Sync + 'static {
    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn of(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Converts to `f64` (lossless for both supported types).
    #[inline]
    fn to_f64(self) -> f64 {
        self.to_subset_unchecked()
    }

    /// Converts a count into this scalar.
    #[inline]
    fn of_count(n: usize) -> Self {
        Self::of(n as f64)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
