use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::scalar::Scalar;

/// Three components over any [`Scalar`]; doubles as an RGB triple.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct V3<S = f64> {
    pub x: S,
    pub y: S,
    pub z: S,
}

pub type Vec3 = V3<f64>;
pub type Rgb<S = f64> = V3<S>;

/// Norms below this are treated as zero when normalizing.
pub const NORM_EPSILON: f64 = 1e-12;

impl<S> V3<S> {
    pub const fn new(x: S, y: S, z: S) -> Self {
        Self { x, y, z }
    }
}

impl<S: Copy> V3<S> {
    pub fn splat(v: S) -> Self {
        Self::new(v, v, v)
    }

    pub fn to_array(self) -> [S; 3] {
        [self.x, self.y, self.z]
    }

    pub fn map<T>(self, mut f: impl FnMut(S) -> T) -> V3<T> {
        V3::new(f(self.x), f(self.y), f(self.z))
    }
}

impl<S: Copy> From<[S; 3]> for V3<S> {
    fn from(a: [S; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = V3::new(0.0, 0.0, 0.0);

    pub fn cross(self, o: Vec3) -> Vec3 {
        V3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn min_elem(self, o: Vec3) -> Vec3 {
        V3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_elem(self, o: Vec3) -> Vec3 {
        V3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Lifts a constant vector into the context of `like`.
    pub fn lift<S: Scalar>(self, like: S) -> V3<S> {
        V3::new(like.lift(self.x), like.lift(self.y), like.lift(self.z))
    }
}

impl<S: Scalar> V3<S> {
    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn dot_const(self, o: Vec3) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> S {
        self.dot(self).sqrt()
    }

    /// Unit vector along `self`, dividing by `max(|self|, 1e-12)`.
    pub fn normalize(self) -> Self {
        let n = self.norm();
        let n = n.max(n.lift(NORM_EPSILON));
        self.scale(n.lift(1.0) / n)
    }

    pub fn scale(self, s: S) -> Self {
        V3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn scale_f(self, s: f64) -> Self {
        V3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn hadamard(self, o: Self) -> Self {
        V3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn sum(self) -> S {
        self.x + self.y + self.z
    }

    pub fn values(self) -> Vec3 {
        V3::new(self.x.value(), self.y.value(), self.z.value())
    }

    pub fn max0(self) -> Self {
        V3::new(self.x.max0(), self.y.max0(), self.z.max0())
    }
}

impl<S: Scalar> Add for V3<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        V3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<S: Scalar> Sub for V3<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        V3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<S: Scalar> Neg for V3<S> {
    type Output = Self;
    fn neg(self) -> Self {
        V3::new(-self.x, -self.y, -self.z)
    }
}

impl<S: Scalar> Mul<f64> for V3<S> {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self.scale_f(s)
    }
}
