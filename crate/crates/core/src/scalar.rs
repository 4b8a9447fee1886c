//! Numeric abstractions shared by the feature, model and metric code.
//!
//! Training and inference are generic over [`Scalar`] (`f32` or `f64`).
//! Evaluation metrics are generic over [`Measure`], which additionally
//! admits exact rationals so that reported percentages can be checked
//! without rounding noise.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num};

/// Floating-point type used for feature weights and model parameters.
pub trait Scalar:
    Float + FromPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Width tag recorded in serialized bundles.
    const BITS: u8;

    /// Converts an `f64` literal or configuration value.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to every Scalar")
    }

    /// Converts a count.
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to every Scalar")
    }

    /// Lossless widening used by the bundle encoder.
    fn widen(self) -> f64 {
        self.to_f64().expect("Scalar widens to f64")
    }
}

impl Scalar for f32 {
    const BITS: u8 = 32;
}

impl Scalar for f64 {
    const BITS: u8 = 64;
}

/// Value type for evaluation metrics: a field that can be built from counts.
pub trait Measure: Num + Clone + PartialOrd + Debug {
    fn from_count(n: u64) -> Self;
    fn approx_f64(&self) -> f64;
}

impl Measure for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }
    fn approx_f64(&self) -> f64 {
        *self
    }
}

impl Measure for f32 {
    fn from_count(n: u64) -> Self {
        n as f32
    }
    fn approx_f64(&self) -> f64 {
        f64::from(*self)
    }
}

macro_rules! impl_measure_ratio {
    ($($int:ty),*) => {
        $(
            impl Measure for Ratio<$int> {
                fn from_count(n: u64) -> Self {
                    Ratio::from_integer(<$int>::try_from(n).expect("count fits the rational base type"))
                }
                fn approx_f64(&self) -> f64 {
                    *self.numer() as f64 / *self.denom() as f64
                }
            }
        )*
    };
}

impl_measure_ratio!(i64, u64, i128, u128);
