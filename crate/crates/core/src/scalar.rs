use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the tables are stored in: `f32` or `f64`.
///
/// Tolerances scale with the precision of the type.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Allowed deviation of a probability row sum from one.
    const PROB_TOL: f64;
    /// Two action values closer than this are treated as tied.
    const TIE_TOL: f64;

    fn prob_tol() -> Self {
        Self::from_f64(Self::PROB_TOL).unwrap()
    }

    fn tie_tol() -> Self {
        Self::from_f64(Self::TIE_TOL).unwrap()
    }

    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Scalar for f64 {
    const PROB_TOL: f64 = 1e-9;
    const TIE_TOL: f64 = 1e-12;
}

impl Scalar for f32 {
    const PROB_TOL: f64 = 1e-5;
    const TIE_TOL: f64 = 1e-6;
}

/// Sum of a row, used by every normalization check.
pub(crate) fn row_sum<T: Scalar>(row: &[T]) -> T {
    row.iter().copied().sum()
}
