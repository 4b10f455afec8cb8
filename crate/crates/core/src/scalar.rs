//! Floating-point abstraction so the whole pipeline runs at 32-bit (training)
//! or 64-bit (gradient checking) precision.

use std::fmt::{Debug, Display};

pub trait Scalar:
    num_traits::Float + Default + Debug + Display + Send + Sync + 'static
{
    /// Central-difference step used by default in gradient checks.
    const FD_STEP: Self;
    /// Relative-error denominator floor for gradient checks; keeps tiny
    /// gradients from inflating the reported error.
    const FD_FLOOR: Self;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn from_f32(x: f32) -> Self;
    fn to_f32(self) -> f32;
    fn from_usize(x: usize) -> Self {
        Self::from_f64(x as f64)
    }
}

impl Scalar for f32 {
    const FD_STEP: f32 = 1e-2;
    const FD_FLOOR: f32 = 1e-2;

    fn from_f64(x: f64) -> f32 {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f32(x: f32) -> f32 {
        x
    }
    fn to_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    const FD_STEP: f64 = 1e-5;
    const FD_FLOOR: f64 = 1e-3;

    fn from_f64(x: f64) -> f64 {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f32(x: f32) -> f64 {
        x as f64
    }
    fn to_f32(self) -> f32 {
        self as f32
    }
}
