//! Scalar abstraction: the numeric core is generic over the element type.
//!
//! Everything downstream of [`crate::matrix::Matrix`] works for any type
//! implementing [`Scalar`]; the pipeline instantiates `f64` (see the type
//! aliases at the crate root).

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

pub trait Scalar:
    Float + NumAssignOps + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used when ingesting sampled or parsed values.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }

    /// `1`, `-1` or `0`; `sign(0) = 0` by convention.
    fn signum0(self) -> Self {
        if self > Self::zero() {
            Self::one()
        } else if self < Self::zero() {
            -Self::one()
        } else {
            Self::zero()
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
