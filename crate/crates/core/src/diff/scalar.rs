use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tape::{sigmoid, softplus, Var};

/// Arithmetic shared by plain `f64` evaluation and taped [`Var`] values.
///
/// Shading and SG code is written once against this trait; forward-only
/// renders instantiate it with `f64`, gradient passes with `Var`.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(self) -> f64;
    /// A constant living in the same evaluation context as `self`.
    fn lift(self, x: f64) -> Self;
    fn exp(self) -> Self;
    fn expm1(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, exponent: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
    fn softplus(self) -> Self;
    fn clamp(self, lo: f64, hi: f64) -> Self;
    fn max(self, other: Self) -> Self;
    fn min(self, other: Self) -> Self;
    /// A two-input function as a single operation. `value` gives `f(a, b)`;
    /// `partials` gives `(f, df/da, df/db)`.
    fn fuse2(
        self,
        other: Self,
        value: impl Fn(f64, f64) -> f64,
        partials: impl Fn(f64, f64) -> (f64, f64, f64),
    ) -> Self;

    fn zero_like(self) -> Self {
        self.lift(0.0)
    }

    fn max0(self) -> Self {
        self.max(self.lift(0.0))
    }
}

impl Scalar for f64 {
    fn value(self) -> f64 {
        self
    }
    fn lift(self, x: f64) -> Self {
        x
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn expm1(self) -> Self {
        f64::exp_m1(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powf(self, exponent: f64) -> Self {
        f64::powf(self, exponent)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn sigmoid(self) -> Self {
        sigmoid(self)
    }
    fn softplus(self) -> Self {
        softplus(self)
    }
    fn clamp(self, lo: f64, hi: f64) -> Self {
        if self <= lo {
            lo
        } else if self >= hi {
            hi
        } else {
            self
        }
    }
    fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }
    fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }
    fn fuse2(
        self,
        other: Self,
        value: impl Fn(f64, f64) -> f64,
        _partials: impl Fn(f64, f64) -> (f64, f64, f64),
    ) -> Self {
        value(self, other)
    }
}

impl<'t> Scalar for Var<'t> {
    fn value(self) -> f64 {
        Var::value(self)
    }
    fn lift(self, x: f64) -> Self {
        self.constant(x)
    }
    fn exp(self) -> Self {
        Var::exp(self)
    }
    fn expm1(self) -> Self {
        Var::expm1(self)
    }
    fn ln(self) -> Self {
        Var::ln(self)
    }
    fn sqrt(self) -> Self {
        Var::sqrt(self)
    }
    fn powf(self, exponent: f64) -> Self {
        Var::powf(self, exponent)
    }
    fn sin(self) -> Self {
        Var::sin(self)
    }
    fn cos(self) -> Self {
        Var::cos(self)
    }
    fn tanh(self) -> Self {
        Var::tanh(self)
    }
    fn sigmoid(self) -> Self {
        Var::sigmoid(self)
    }
    fn softplus(self) -> Self {
        Var::softplus(self)
    }
    fn clamp(self, lo: f64, hi: f64) -> Self {
        Var::clamp(self, lo, hi)
    }
    fn max(self, other: Self) -> Self {
        Var::max(self, other)
    }
    fn min(self, other: Self) -> Self {
        Var::min(self, other)
    }
    fn fuse2(
        self,
        other: Self,
        _value: impl Fn(f64, f64) -> f64,
        partials: impl Fn(f64, f64) -> (f64, f64, f64),
    ) -> Self {
        Var::fuse2(self, other, partials)
    }
}
