//! Scalar abstraction and 3-vectors shared by the plain and differentiable
//! rendering paths.
//!
//! Every rendering routine is written once over [`Scalar`]. Instantiated with
//! `f32`/`f64` it is an ordinary fast renderer; instantiated with
//! [`crate::autodiff::Var`] every arithmetic step is recorded on a tape.
//! Comparisons always act on plain values, so branching is never
//! differentiated.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Epsilon below which a vector is treated as zero-length by [`Vec3::normalize`].
pub const NORMALIZE_EPS: f64 = 1e-12;

/// A machine floating point type: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Scalar<Real = Self>
    + Default
    + Debug
    + Display
    + FromStr
    + Sum
    + AddAssign
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Bit width, reported in run manifests.
    const BITS: u32;
    /// Default central-difference step for gradient checks at this width.
    const DEFAULT_FD_DELTA: f64;

    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    const BITS: u32 = 32;
    const DEFAULT_FD_DELTA: f64 = 5e-3;
}

impl Real for f64 {
    const BITS: u32 = 64;
    const DEFAULT_FD_DELTA: f64 = 1e-6;
}

/// Arithmetic shared by plain floats and AD variables.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    type Real: Real;

    /// Lifts a plain value as a constant (never differentiated).
    fn from_real(x: Self::Real) -> Self;
    /// The plain value carried by this scalar.
    fn value(self) -> Self::Real;

    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    /// On a tie the first argument wins.
    fn max(self, other: Self) -> Self;
    /// On a tie the first argument wins.
    fn min(self, other: Self) -> Self;
    fn powf(self, exponent: Self) -> Self;
    fn tan(self) -> Self;

    fn lit(x: f64) -> Self {
        Self::from_real(Self::Real::of(x))
    }

    fn zero() -> Self {
        Self::lit(0.0)
    }

    fn one() -> Self {
        Self::lit(1.0)
    }
}

macro_rules! impl_scalar_for_float {
    ($t:ty) => {
        impl Scalar for $t {
            type Real = $t;

            #[inline]
            fn from_real(x: $t) -> $t {
                x
            }
            #[inline]
            fn value(self) -> $t {
                self
            }
            #[inline]
            fn sqrt(self) -> $t {
                <$t>::sqrt(self)
            }
            #[inline]
            fn abs(self) -> $t {
                <$t>::abs(self)
            }
            #[inline]
            fn max(self, other: $t) -> $t {
                if self >= other {
                    self
                } else {
                    other
                }
            }
            #[inline]
            fn min(self, other: $t) -> $t {
                if self <= other {
                    self
                } else {
                    other
                }
            }
            #[inline]
            fn powf(self, exponent: $t) -> $t {
                <$t>::powf(self, exponent)
            }
            #[inline]
            fn tan(self) -> $t {
                <$t>::tan(self)
            }
        }
    };
}

impl_scalar_for_float!(f32);
impl_scalar_for_float!(f64);

/// Three-component vector used for positions, directions and RGB colors.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Vec3<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S> Vec3<S> {
    pub const fn new(x: S, y: S, z: S) -> Self {
        Vec3 { x, y, z }
    }

    pub fn map<T>(self, mut f: impl FnMut(S) -> T) -> Vec3<T> {
        Vec3::new(f(self.x), f(self.y), f(self.z))
    }

    pub fn to_array(self) -> [S; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array([x, y, z]: [S; 3]) -> Self {
        Vec3::new(x, y, z)
    }

    /// Component by axis index 0..3.
    pub fn axis(&self, i: usize) -> &S {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("axis index {i} out of range"),
        }
    }

    pub fn axis_mut(&mut self, i: usize) -> &mut S {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("axis index {i} out of range"),
        }
    }
}

impl<S: Scalar> Vec3<S> {
    pub fn splat(s: S) -> Self {
        Vec3::new(s, s, s)
    }

    pub fn zero() -> Self {
        Self::splat(S::zero())
    }

    pub fn lit(x: f64, y: f64, z: f64) -> Self {
        Vec3::new(S::lit(x), S::lit(y), S::lit(z))
    }

    pub fn from_real(v: Vec3<S::Real>) -> Self {
        v.map(S::from_real)
    }

    pub fn value(self) -> Vec3<S::Real> {
        self.map(Scalar::value)
    }

    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Right-handed cross product.
    pub fn cross(self, o: Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length_squared(self) -> S {
        self.dot(self)
    }

    pub fn length(self) -> S {
        self.length_squared().sqrt()
    }

    /// Unit vector in the direction of `self`; the zero vector when the length
    /// is at most [`NORMALIZE_EPS`].
    pub fn normalize(self) -> Self {
        let len = self.length();
        if len.value() <= S::Real::of(NORMALIZE_EPS) {
            return Self::zero();
        }
        self / len
    }

    /// Component-wise product, used for color modulation.
    pub fn hadamard(self, o: Self) -> Self {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn clamp01(self) -> Self {
        let (lo, hi) = (S::zero(), S::one());
        self.map(|c| c.max(lo).min(hi))
    }

    pub fn min_by_component(self, o: Self) -> Self {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_by_component(self, o: Self) -> Self {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }
}

impl<S: Scalar> Add for Vec3<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<S: Scalar> Sub for Vec3<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<S: Scalar> Neg for Vec3<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl<S: Scalar> Mul<S> for Vec3<S> {
    type Output = Self;
    fn mul(self, s: S) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<S: Scalar> Div<S> for Vec3<S> {
    type Output = Self;
    fn div(self, s: S) -> Self {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}
