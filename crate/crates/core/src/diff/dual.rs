//! Forward-mode numbers carrying two tangents, used to collapse small
//! two-input functions into a single tape operation.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::scalar::Scalar;
use super::tape::{sigmoid, softplus};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual2 {
    pub value: f64,
    pub d: [f64; 2],
}

impl Dual2 {
    pub fn constant(value: f64) -> Self {
        Self { value, d: [0.0; 2] }
    }

    /// Seeds tangent slot `slot`.
    pub fn variable(value: f64, slot: usize) -> Self {
        let mut d = [0.0; 2];
        d[slot] = 1.0;
        Self { value, d }
    }

    /// Chain rule through a scalar function with derivative `partial`.
    fn chain(self, value: f64, partial: f64) -> Self {
        Self {
            value,
            d: [self.d[0] * partial, self.d[1] * partial],
        }
    }

    fn combine(self, other: Self, value: f64, da: f64, db: f64) -> Self {
        Self {
            value,
            d: [self.d[0] * da + other.d[0] * db, self.d[1] * da + other.d[1] * db],
        }
    }
}

/// Evaluates `f(a, b)` and both partial derivatives.
pub fn partials2(a: f64, b: f64, f: impl Fn(Dual2, Dual2) -> Dual2) -> (f64, f64, f64) {
    let r = f(Dual2::variable(a, 0), Dual2::variable(b, 1));
    (r.value, r.d[0], r.d[1])
}

impl Add for Dual2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.combine(o, self.value + o.value, 1.0, 1.0)
    }
}

impl Sub for Dual2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.combine(o, self.value - o.value, 1.0, -1.0)
    }
}

impl Mul for Dual2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.combine(o, self.value * o.value, o.value, self.value)
    }
}

impl Div for Dual2 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.value;
        self.combine(o, self.value * inv, inv, -self.value * inv * inv)
    }
}

impl Neg for Dual2 {
    type Output = Self;
    fn neg(self) -> Self {
        self.chain(-self.value, -1.0)
    }
}

impl Add<f64> for Dual2 {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        Self { value: self.value + o, ..self }
    }
}

impl Sub<f64> for Dual2 {
    type Output = Self;
    fn sub(self, o: f64) -> Self {
        Self { value: self.value - o, ..self }
    }
}

impl Mul<f64> for Dual2 {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        self.chain(self.value * o, o)
    }
}

impl Div<f64> for Dual2 {
    type Output = Self;
    fn div(self, o: f64) -> Self {
        self.chain(self.value / o, 1.0 / o)
    }
}

impl Scalar for Dual2 {
    fn value(self) -> f64 {
        self.value
    }
    fn lift(self, x: f64) -> Self {
        Dual2::constant(x)
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }
    fn expm1(self) -> Self {
        self.chain(self.value.exp_m1(), self.value.exp())
    }
    fn ln(self) -> Self {
        self.chain(self.value.ln(), 1.0 / self.value)
    }
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, if s > 0.0 { 0.5 / s } else { 0.0 })
    }
    fn powf(self, exponent: f64) -> Self {
        let partial = if self.value == 0.0 {
            0.0
        } else {
            exponent * self.value.powf(exponent - 1.0)
        };
        self.chain(self.value.powf(exponent), partial)
    }
    fn sin(self) -> Self {
        self.chain(self.value.sin(), self.value.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.value.cos(), -self.value.sin())
    }
    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.chain(t, 1.0 - t * t)
    }
    fn sigmoid(self) -> Self {
        let s = sigmoid(self.value);
        self.chain(s, s * (1.0 - s))
    }
    fn softplus(self) -> Self {
        self.chain(softplus(self.value), sigmoid(self.value))
    }
    fn clamp(self, lo: f64, hi: f64) -> Self {
        if self.value <= lo {
            self.chain(lo, 0.0)
        } else if self.value >= hi {
            self.chain(hi, 0.0)
        } else {
            self
        }
    }
    fn max(self, other: Self) -> Self {
        if self.value >= other.value {
            self
        } else {
            other
        }
    }
    fn min(self, other: Self) -> Self {
        if self.value <= other.value {
            self
        } else {
            other
        }
    }
    fn fuse2(
        self,
        other: Self,
        _value: impl Fn(f64, f64) -> f64,
        partials: impl Fn(f64, f64) -> (f64, f64, f64),
    ) -> Self {
        let (v, da, db) = partials(self.value, other.value);
        self.combine(other, v, da, db)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tape;

    fn sample<S: Scalar>(a: S, b: S) -> S {
        ((a * b).sin() + a.exp() / (b * b + 1.0) + 1.5).sqrt() - (b - 0.3).powf(3.0) * a.tanh()
    }

    #[test]
    fn partials_agree_with_the_tape() {
        for &(a, b) in &[(0.3, 0.7), (-1.2, 0.4), (2.0, -0.9)] {
            let (v, da, db) = partials2(a, b, sample);
            let tape = Tape::new();
            let (x, y) = (tape.param(a), tape.param(b));
            let out = sample(x, y);
            let g = tape.backward(out).unwrap();
            assert!((v - out.value()).abs() < 1e-15);
            assert!((da - g[0]).abs() < 1e-12 && (db - g[1]).abs() < 1e-12, "{da} {db} vs {g:?}");
        }
    }

    #[test]
    fn fused_op_is_one_node() {
        let tape = Tape::new();
        let (x, y) = (tape.param(0.4), tape.param(1.1));
        let before = tape.len();
        let out = Scalar::fuse2(x, y, sample, |a, b| partials2(a, b, sample));
        assert_eq!(tape.len(), before + 1);
        let g = tape.backward(out).unwrap();
        let (_, da, db) = partials2(0.4, 1.1, sample);
        assert_eq!(g, vec![da, db]);
    }
}
