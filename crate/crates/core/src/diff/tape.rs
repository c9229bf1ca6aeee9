//! Scalar reverse-mode tape.
//!
//! Every [`Var`] borrows the [`Tape`] it was recorded on. Nodes only ever
//! reference lower indices, so a single reverse sweep accumulates adjoints.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

const NONE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("domain violation in `{op}`")]
    Domain { op: &'static str },
    #[error("output value does not belong to this tape")]
    ForeignOutput,
}

#[derive(Clone, Copy, Debug)]
struct Node {
    lhs: u32,
    rhs: u32,
    d_lhs: f64,
    d_rhs: f64,
}

/// Append-only record of scalar operations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<Vec<u32>>,
    fault: Cell<Option<&'static str>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.borrow().len())
            .field("params", &self.params.borrow().len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(nodes)),
            ..Self::default()
        }
    }

    /// Drops all recorded nodes while keeping the allocation.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
        self.params.get_mut().clear();
        self.fault.set(None);
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn param_count(&self) -> usize {
        self.params.borrow().len()
    }

    /// Records a leaf. Trainable leaves get a parameter slot in recording order.
    pub fn lift(&self, value: f64, trainable: bool) -> Var<'_> {
        if trainable {
            self.param(value)
        } else {
            self.constant(value)
        }
    }

    pub fn param(&self, value: f64) -> Var<'_> {
        let index = self.push(NONE, 0.0, NONE, 0.0);
        self.params.borrow_mut().push(index);
        Var {
            tape: self,
            index,
            value,
        }
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        Var {
            tape: self,
            index: NONE,
            value,
        }
    }

    /// First domain violation recorded on this tape, if any.
    pub fn check(&self) -> Result<(), DiffError> {
        match self.fault.get() {
            Some(op) => Err(DiffError::Domain { op }),
            None => Ok(()),
        }
    }

    /// Gradient of `output` with respect to every parameter slot, in slot order.
    pub fn backward(&self, output: Var<'_>) -> Result<Vec<f64>, DiffError> {
        let mut grads = vec![0.0; self.param_count()];
        self.backward_into(output, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Adds `seed * d(output)/d(param)` into `grads` (one entry per slot).
    pub fn backward_into(
        &self,
        output: Var<'_>,
        seed: f64,
        grads: &mut [f64],
    ) -> Result<(), DiffError> {
        if !std::ptr::eq(output.tape, self) {
            return Err(DiffError::ForeignOutput);
        }
        self.check()?;
        let params = self.params.borrow();
        assert_eq!(grads.len(), params.len(), "gradient buffer length");
        if output.index == NONE {
            return Ok(());
        }
        let nodes = self.nodes.borrow();
        let mut adjoint = vec![0.0; output.index as usize + 1];
        adjoint[output.index as usize] = seed;
        for i in (0..=output.index as usize).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            if node.lhs != NONE {
                adjoint[node.lhs as usize] += a * node.d_lhs;
            }
            if node.rhs != NONE {
                adjoint[node.rhs as usize] += a * node.d_rhs;
            }
        }
        for (g, &slot) in grads.iter_mut().zip(params.iter()) {
            if let Some(a) = adjoint.get(slot as usize) {
                *g += a;
            }
        }
        Ok(())
    }

    fn push(&self, lhs: u32, d_lhs: f64, rhs: u32, d_rhs: f64) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let index = u32::try_from(nodes.len()).expect("tape overflow");
        nodes.push(Node {
            lhs,
            rhs,
            d_lhs,
            d_rhs,
        });
        index
    }

    fn fault(&self, op: &'static str) {
        if self.fault.get().is_none() {
            self.fault.set(Some(op));
        }
    }
}

/// A scalar recorded on a [`Tape`], or a constant riding along with it.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: u32,
    value: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.index == NONE {
            write!(f, "Var(const {})", self.value)
        } else {
            write!(f, "Var(#{} = {})", self.index, self.value)
        }
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.value
    }

    pub fn is_constant(self) -> bool {
        self.index == NONE
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    pub fn constant(self, value: f64) -> Self {
        self.tape.constant(value)
    }

    fn unary(self, value: f64, partial: f64) -> Self {
        let index = if self.index == NONE {
            NONE
        } else {
            self.tape.push(self.index, partial, NONE, 0.0)
        };
        Var {
            tape: self.tape,
            index,
            value,
        }
    }

    fn binary(self, other: Self, value: f64, d_self: f64, d_other: f64) -> Self {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "mixed tapes");
        let index = match (self.index, other.index) {
            (NONE, NONE) => NONE,
            (a, NONE) => self.tape.push(a, d_self, NONE, 0.0),
            (NONE, b) => self.tape.push(b, d_other, NONE, 0.0),
            (a, b) => self.tape.push(a, d_self, b, d_other),
        };
        Var {
            tape: self.tape,
            index,
            value,
        }
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(e, e)
    }

    pub fn expm1(self) -> Self {
        self.unary(self.value.exp_m1(), self.value.exp())
    }

    pub fn ln(self) -> Self {
        if self.value <= 0.0 {
            self.tape.fault("ln");
        }
        self.unary(self.value.ln(), 1.0 / self.value)
    }

    pub fn try_ln(self) -> Result<Self, DiffError> {
        if self.value <= 0.0 {
            return Err(DiffError::Domain { op: "ln" });
        }
        Ok(self.ln())
    }

    pub fn sqrt(self) -> Self {
        if self.value < 0.0 {
            self.tape.fault("sqrt");
        }
        let s = self.value.sqrt();
        let partial = if s > 0.0 { 0.5 / s } else { 0.0 };
        self.unary(s, partial)
    }

    /// `self^exponent` for a constant exponent. The partial at a zero base is 0.
    pub fn powf(self, exponent: f64) -> Self {
        if self.value < 0.0 && exponent.fract() != 0.0 {
            self.tape.fault("powf");
        }
        let value = self.value.powf(exponent);
        let partial = if self.value == 0.0 {
            0.0
        } else {
            exponent * self.value.powf(exponent - 1.0)
        };
        self.unary(value, partial)
    }

    /// `self^exponent` with a recorded exponent; requires a positive base.
    pub fn pow(self, exponent: Self) -> Self {
        if self.value <= 0.0 {
            self.tape.fault("pow");
        }
        let value = self.value.powf(exponent.value);
        self.binary(
            exponent,
            value,
            exponent.value * self.value.powf(exponent.value - 1.0),
            value * self.value.ln(),
        )
    }

    pub fn sin(self) -> Self {
        self.unary(self.value.sin(), self.value.cos())
    }

    pub fn cos(self) -> Self {
        self.unary(self.value.cos(), -self.value.sin())
    }

    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.unary(t, 1.0 - t * t)
    }

    pub fn sigmoid(self) -> Self {
        let s = sigmoid(self.value);
        self.unary(s, s * (1.0 - s))
    }

    pub fn softplus(self) -> Self {
        self.unary(softplus(self.value), sigmoid(self.value))
    }

    pub fn abs(self) -> Self {
        let partial = if self.value < 0.0 { -1.0 } else { 1.0 };
        self.unary(self.value.abs(), partial)
    }

    /// Clamp with zero partial outside `[lo, hi]` and at the boundaries.
    pub fn clamp(self, lo: f64, hi: f64) -> Self {
        if self.value <= lo {
            self.unary(lo, 0.0)
        } else if self.value >= hi {
            self.unary(hi, 0.0)
        } else {
            self.unary(self.value, 1.0)
        }
    }

    /// Maximum; ties go to `self`.
    pub fn max(self, other: Self) -> Self {
        if self.value >= other.value {
            self.binary(other, self.value, 1.0, 0.0)
        } else {
            self.binary(other, other.value, 0.0, 1.0)
        }
    }

    /// Minimum; ties go to `self`.
    pub fn min(self, other: Self) -> Self {
        if self.value <= other.value {
            self.binary(other, self.value, 1.0, 0.0)
        } else {
            self.binary(other, other.value, 0.0, 1.0)
        }
    }

    /// Records `f(self, other)` as one node; `f` returns the value and both
    /// partials.
    pub fn fuse2(self, other: Self, f: impl Fn(f64, f64) -> (f64, f64, f64)) -> Self {
        let (value, da, db) = f(self.value, other.value);
        if !value.is_finite() {
            self.tape.fault("fuse2");
        }
        self.binary(other, value, da, db)
    }

    pub fn try_div(self, other: Self) -> Result<Self, DiffError> {
        if other.value == 0.0 {
            return Err(DiffError::Domain { op: "div" });
        }
        Ok(self / other)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for positive inputs.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        if rhs.value == 0.0 {
            self.tape.fault("div");
        }
        let inv = 1.0 / rhs.value;
        self.binary(rhs, self.value * inv, inv, -self.value * inv * inv)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        self.unary(self.value + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.value - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.value * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        if rhs == 0.0 {
            self.tape.fault("div");
        }
        self.unary(self.value / rhs, 1.0 / rhs)
    }
}
