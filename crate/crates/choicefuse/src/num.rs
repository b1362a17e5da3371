//! Scalar abstraction for the core math: f32 or f64.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar usable in the dense-layer math.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + ScalarOperand
    + LinalgScalar
    + Sum
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from f64, for constants and RNG draws.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from(v).expect("f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
