//! Scalar abstraction for the tracking and scoring math.
//!
//! Everything downstream of the integer event/cluster bookkeeping (centroids,
//! velocities, stability, confidence) is written against [`Scalar`] so the
//! pipeline can run in `f32` or `f64`.

use std::fmt::{Debug, Display, LowerExp};
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable by the pipeline: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for parameters.
    fn of(value: f64) -> Self {
        <Self as FromPrimitive>::from_f64(value).unwrap_or_else(Self::nan)
    }

    /// Lossless (for the magnitudes involved) conversion from an integer.
    fn of_u64(value: u64) -> Self {
        <Self as FromPrimitive>::from_u64(value).unwrap_or_else(Self::nan)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// A 2-vector: positions in pixels or velocities in pixels/second.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2<F> {
    pub x: F,
    pub y: F,
}

impl<F: Scalar> Vec2<F> {
    pub fn new(x: F, y: F) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(F::zero(), F::zero())
    }

    pub fn dot(self, other: Self) -> F {
        self.x * other.x + self.y * other.y
    }

    /// Euclidean norm, computed without intermediate overflow.
    pub fn norm(self) -> F {
        self.x.hypot(self.y)
    }

    pub fn scale(self, k: F) -> Self {
        Self::new(self.x * k, self.y * k)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn to_f64(self) -> Vec2<f64> {
        Vec2::new(self.x.as_f64(), self.y.as_f64())
    }
}

impl<F: Scalar> Add for Vec2<F> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<F: Scalar> Sub for Vec2<F> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<F: Scalar> Neg for Vec2<F> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

impl<F: Scalar> Mul<F> for Vec2<F> {
    type Output = Self;
    fn mul(self, k: F) -> Self {
        self.scale(k)
    }
}

impl<F: Scalar> Div<F> for Vec2<F> {
    type Output = Self;
    fn div(self, k: F) -> Self {
        Self::new(self.x / k, self.y / k)
    }
}
