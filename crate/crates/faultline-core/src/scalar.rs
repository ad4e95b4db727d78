//! Scalar abstraction for the normalization step.
//!
//! All event counting in this crate is done with unsigned integers;
//! only the final division into normalized contributions and weights
//! needs a richer number type. [`Scalar`] captures exactly what that
//! step requires, so reports can be produced in `f32`/`f64` for
//! presentation or in [`num_rational::BigRational`] when a test wants
//! the arithmetic to be exact.

use num_traits::{One, Zero};
use std::ops::{Add, Div, Mul, Sub};

/// Number type usable for normalized contributions and weights.
pub trait Scalar:
    Clone
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    /// Converts an event count into the scalar domain.
    fn from_count(count: u64) -> Self;
}

impl Scalar for f32 {
    fn from_count(count: u64) -> Self {
        count as f32
    }
}

impl Scalar for f64 {
    fn from_count(count: u64) -> Self {
        count as f64
    }
}

impl Scalar for num_rational::BigRational {
    fn from_count(count: u64) -> Self {
        num_rational::BigRational::from_integer(num_bigint::BigInt::from(count))
    }
}
