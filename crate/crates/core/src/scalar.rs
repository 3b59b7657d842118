//! Floating-point scalar used for embedding vectors and similarity scores.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type of an embedding vector.
///
/// Implemented for `f32` and `f64`. The persisted index records the width so
/// a file written with one type reloads bit-exactly into the same type.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Width tag written to the index header (32 or 64).
    const BITS: u8;
    /// Tolerance for the unit-norm invariant.
    fn norm_tolerance() -> Self;
}

impl Scalar for f32 {
    const BITS: u8 = 32;
    fn norm_tolerance() -> Self {
        1e-6
    }
}

impl Scalar for f64 {
    const BITS: u8 = 64;
    fn norm_tolerance() -> Self {
        1e-12
    }
}

/// Euclidean dot product of two equal-length slices.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// L2 norm.
pub fn norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}
