use num_traits::{Float, FromPrimitive};

/// Scalar type for all tensor math: f64 for gradient-check builds,
/// f32 is sufficient for training.
pub trait Real:
    Float
    + FromPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Convert an f64 literal into the working scalar type.
#[inline]
pub fn real<R: Real>(x: f64) -> R {
    R::from_f64(x).expect("f64 value representable in scalar type")
}
