//! Floating point scalar abstraction shared by the volume, Saab and RadHop code.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// floating point: f32 or f64
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumCast + Sum + Default + Debug + Send + Sync + 'static
{
    /// Tolerance used by iterative solvers working in this precision.
    const SOLVER_EPS: Self;

    fn of(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {
    const SOLVER_EPS: Self = 1e-7;
}

impl Scalar for f64 {
    const SOLVER_EPS: Self = 1e-15;
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
