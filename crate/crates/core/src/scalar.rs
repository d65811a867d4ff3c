use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating point scalar used by the geometry primitives: f32 or f64.
pub trait Scalar: Float + FromPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static {
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
