//! Scalar abstraction shared by the model, filter and closed-form code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar the core math is written against.
///
/// Implemented for `f32`, `f64` and [`Dual`](crate::dual::Dual) so the same
/// propagation code yields frequency sensitivities by forward differentiation.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// The primal (value) part as `f64`.
    fn value(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}

impl Real for f64 {}
