//! Scalar abstractions shared by the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Edge weight for exact matching. Only ring operations and ordering are
/// required, so exact rationals qualify alongside floats.
pub trait Weight: Num + Copy + PartialOrd + Debug {
    fn is_finite_weight(&self) -> bool {
        true
    }
}

impl Weight for f32 {
    fn is_finite_weight(&self) -> bool {
        self.is_finite()
    }
}

impl Weight for f64 {
    fn is_finite_weight(&self) -> bool {
        self.is_finite()
    }
}

impl Weight for num_rational::Ratio<i32> {}
impl Weight for num_rational::Ratio<i64> {}
impl Weight for num_rational::Ratio<i128> {}

/// Real scalar for the learning components (reward net, covariance, value
/// table).
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
