//! Spherical Gaussians `a * exp(λ (v·μ - 1))` and their closed-form algebra.

use std::f64::consts::PI;

use thiserror::Error;

use crate::diff::{partials2, Rgb, Scalar, Vec3, V3};

/// Product axes shorter than this are treated as antipodal cancellation.
pub const DEGENERATE_AXIS: f64 = 1e-8;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum SgError {
    #[error("degenerate product axis (|mu_m| = {0:e})")]
    DegenerateAxis(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalGaussian<S = f64> {
    pub axis: V3<S>,
    pub sharpness: S,
    pub amplitude: Rgb<S>,
}

/// Result of multiplying two lobes: another lobe, or the constant that
/// remains when the axes cancel exactly.
#[derive(Clone, Copy, Debug)]
pub enum SgProduct<S> {
    Lobe(SphericalGaussian<S>),
    Constant(Rgb<S>),
}

impl SphericalGaussian<f64> {
    /// Builds a lobe, normalizing `axis`.
    pub fn new(axis: Vec3, sharpness: f64, amplitude: Rgb) -> Self {
        Self {
            axis: axis.normalize(),
            sharpness,
            amplitude,
        }
    }

    pub fn is_valid(&self) -> bool {
        (self.axis.norm() - 1.0).abs() <= 1e-6
            && self.sharpness > 0.0
            && self.amplitude.to_array().iter().all(|&a| a >= 0.0)
    }

    /// Lifts a constant lobe into the context of `like`.
    pub fn lift<S: Scalar>(&self, like: S) -> SphericalGaussian<S> {
        SphericalGaussian {
            axis: self.axis.lift(like),
            sharpness: like.lift(self.sharpness),
            amplitude: self.amplitude.lift(like),
        }
    }
}

impl<S: Scalar> SphericalGaussian<S> {
    pub fn eval(&self, v: V3<S>) -> Rgb<S> {
        let w = ((self.axis.dot(v) - 1.0) * self.sharpness).exp();
        self.amplitude.scale(w)
    }

    pub fn eval_at(&self, v: Vec3) -> Rgb<S> {
        let w = ((self.axis.dot_const(v) - 1.0) * self.sharpness).exp();
        self.amplitude.scale(w)
    }

    pub fn product(&self, other: &Self) -> Result<Self, SgError> {
        match self.product_or_constant(other) {
            SgProduct::Lobe(g) => Ok(g),
            SgProduct::Constant(_) => {
                let lm = self.sharpness + other.sharpness;
                let um = (self.axis.scale(self.sharpness) + other.axis.scale(other.sharpness))
                    .scale(lm.lift(1.0) / lm);
                Err(SgError::DegenerateAxis(um.norm().value()))
            }
        }
    }

    /// Pointwise product; when the combined axis vanishes the product is the
    /// constant `a1 a2 exp(-(λ1 + λ2))`.
    pub fn product_or_constant(&self, other: &Self) -> SgProduct<S> {
        let lm = self.sharpness + other.sharpness;
        let weighted = self.axis.scale(self.sharpness) + other.axis.scale(other.sharpness);
        let um_len = weighted.norm() / lm;
        let amp = self.amplitude.hadamard(other.amplitude);
        if um_len.value() < DEGENERATE_AXIS {
            return SgProduct::Constant(amp.scale((-lm).exp()));
        }
        let axis = weighted.scale(lm.lift(1.0) / (um_len * lm));
        SgProduct::Lobe(SphericalGaussian {
            axis,
            sharpness: lm * um_len,
            amplitude: amp.scale(((um_len - 1.0) * lm).exp()),
        })
    }

    /// Integral over the full sphere: `2π a/λ (1 - e^{-2λ})`.
    pub fn integral(&self) -> Rgb<S> {
        let k = sphere_integral_factor(self.sharpness);
        self.amplitude.scale(k)
    }

    /// Channel mean of [`Self::integral`].
    pub fn energy(&self) -> S {
        self.integral().sum() / 3.0
    }

    /// Approximate integral over the hemisphere around `normal`.
    pub fn hemisphere_integral(&self, normal: V3<S>) -> Rgb<S> {
        let cos_beta = self.axis.dot(normal);
        self.amplitude
            .scale(hemisphere_integral_factor(self.sharpness, cos_beta))
    }
}

/// `∫ g1 g2` over the sphere, absorbing the antipodal case as `4π` times
/// the constant product.
pub fn inner_product<S: Scalar>(a: &SphericalGaussian<S>, b: &SphericalGaussian<S>) -> Rgb<S> {
    match a.product_or_constant(b) {
        SgProduct::Lobe(g) => g.integral(),
        SgProduct::Constant(c) => c.scale_f(4.0 * PI),
    }
}

/// `2π/λ (1 - e^{-2λ})` with the bracket evaluated through `expm1`.
pub fn sphere_integral_factor<S: Scalar>(sharpness: S) -> S {
    -(sharpness * -2.0).expm1() * (2.0 * PI) / sharpness
}

/// Integral of a unit-amplitude lobe over the hemisphere whose pole makes
/// angle `acos(cos_beta)` with the lobe axis.
///
/// Blends the exact upper- and lower-hemisphere integrals of an axis-aligned
/// lobe with a fitted smooth step.
pub fn hemisphere_integral_factor<S: Scalar>(sharpness: S, cos_beta: S) -> S {
    sharpness.fuse2(cos_beta, hemisphere_factor_expr, |l, c| partials2(l, c, hemisphere_factor_expr))
}

fn hemisphere_factor_expr<S: Scalar>(sharpness: S, cos_beta: S) -> S {
    let inv = sharpness.lift(1.0) / sharpness;
    let t = sharpness.sqrt() * (inv * 10.8438 + 1.6988)
        / (inv * 6.2201 + inv * inv * 10.2415 + 1.0);
    let inv_a = (-t).exp();
    let s = if cos_beta.value() >= 0.0 {
        let inv_b = (-t * cos_beta).exp();
        (-(inv_a * inv_b) + 1.0) / (-inv_a + inv_b - inv_a * inv_b + 1.0)
    } else {
        let b = (t * cos_beta).exp();
        (b - inv_a) / ((-inv_a + 1.0) * (b + 1.0))
    };
    let e1 = (-sharpness).exp();
    let upper = -(-sharpness).expm1() * (2.0 * PI) / sharpness;
    let lower = (e1 - e1 * e1) * (2.0 * PI) / sharpness;
    lower * (-s + 1.0) + upper * s
}

#[cfg(test)]
#[path = "../tests/support/quadrature.rs"]
mod quadrature;

#[cfg(test)]
mod tests {
    use super::quadrature::{adaptive_simpson, integrate_sphere};
    use super::*;
    use crate::diff::Tape;
    use proptest::prelude::*;

    fn sg(axis: [f64; 3], sharpness: f64, amp: [f64; 3]) -> SphericalGaussian {
        SphericalGaussian::new(axis.into(), sharpness, amp.into())
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn eval_examples() {
        let g = sg([0., 0., 1.], 5.0, [2., 2., 2.]);
        assert_eq!(g.eval(V3::new(0., 0., 1.)), V3::splat(2.0));

        let g = sg([0., 0., 1.], 1.0, [1., 1., 1.]);
        let v = g.eval(V3::new(0., 0., -1.));
        assert!(close(v.x, (-2.0f64).exp(), 1e-15));

        let g = sg([1., 0., 0.], 10.0, [1., 0.5, 0.]);
        let v = g.eval(V3::new(0., 1., 0.));
        let e = (-10.0f64).exp();
        assert!(close(v.x, e, 1e-14) && close(v.y, 0.5 * e, 1e-14) && v.z == 0.0);
    }

    #[test]
    fn product_of_identical_lobes() {
        let g = sg([0., 0., 1.], 3.0, [1., 1., 1.]);
        let p = g.product(&g).unwrap();
        assert_eq!(p.axis, V3::new(0., 0., 1.));
        assert!(close(p.sharpness, 6.0, 1e-15));
        assert!(close(p.amplitude.x, 1.0, 1e-15));
    }

    #[test]
    fn antipodal_product_is_degenerate() {
        let g1 = sg([0., 0., 1.], 2.0, [2., 2., 2.]);
        let g2 = sg([0., 0., -1.], 2.0, [1., 1., 1.]);
        assert!(matches!(g1.product(&g2), Err(SgError::DegenerateAxis(_))));
    }

    #[test]
    fn integral_examples_match_quadrature() {
        for (lambda, expected) in [(1.0, 5.4331), (2.0, 3.0840)] {
            let g = sg([0., 0., 1.], lambda, [1., 1., 1.]);
            let q = adaptive_simpson(&|t| 2.0 * PI * (lambda * (t - 1.0)).exp(), -1.0, 1.0, 1e-13);
            assert!(close(g.integral().x, q, 1e-10));
            assert!((g.integral().x - expected).abs() < 5e-4);
        }
        let zero = sg([0., 1., 0.], 3.0, [0., 0., 0.]);
        assert_eq!(zero.integral(), V3::splat(0.0));
    }

    #[test]
    fn integral_is_rotation_invariant_on_a_grid() {
        let g = sg([0.3, -0.5, 0.8], 7.0, [1.0, 0.2, 0.6]);
        let q = integrate_sphere(200, 400, |v| g.eval(V3::from(v)).y);
        assert!(close(g.integral().y, q, 1e-8), "{} vs {q}", g.integral().y);
    }

    #[test]
    fn energy_examples() {
        let g = sg([0., 0., 1.], 1.0, [1., 1., 1.]);
        assert!((g.energy() - 5.4331).abs() < 5e-4);
        assert_eq!(sg([0., 0., 1.], 1.0, [0., 0., 0.]).energy(), 0.0);
        let g2 = sg([0., 0., 1.], 1.0, [2., 2., 2.]);
        assert!(close(g2.energy(), 2.0 * g.energy(), 1e-15));
    }

    #[test]
    fn inner_product_examples() {
        let g = sg([0., 0., 1.], 1.0, [1., 1., 1.]);
        assert!((inner_product(&g, &g).x - 3.0840).abs() < 5e-4);

        // Nearly constant second lobe.
        let g1 = sg([0.2, 0.1, 0.9], 4.0, [1.0, 0.5, 0.25]);
        let g2 = sg([0., 1., 0.], 1e-4, [0.7, 0.7, 0.7]);
        let ip = inner_product(&g1, &g2).x;
        assert!(close(ip, g1.integral().x * 0.7, 1e-2));
        let q = integrate_sphere(200, 400, |v| g1.eval(V3::from(v)).x * g2.eval(V3::from(v)).x);
        assert!(close(ip, q, 1e-8));

        let a = sg([0., 0., 1.], 2.0, [2., 2., 2.]);
        let b = sg([0., 0., -1.], 2.0, [1., 1., 1.]);
        let ip = inner_product(&a, &b).x;
        let q = integrate_sphere(200, 400, |v| a.eval(V3::from(v)).x * b.eval(V3::from(v)).x);
        assert!(close(ip, 4.0 * PI * 2.0 * (-4.0f64).exp(), 1e-12));
        assert!(close(ip, q, 1e-6), "{ip} vs {q}");
    }

    #[test]
    fn hemisphere_factor_tracks_quadrature() {
        // The smooth-step fit is approximate; it is checked to a few percent.
        for &lambda in &[0.5, 2.0, 10.0, 50.0] {
            for &cb in &[-0.6, -0.1, 0.0, 0.3, 0.9, 1.0] {
                let axis = V3::new((1.0 - cb * cb).sqrt(), 0.0, cb);
                let g = SphericalGaussian { axis, sharpness: lambda, amplitude: V3::splat(1.0) };
                let exact = integrate_sphere(400, 800, |v| {
                    if v[2] >= 0.0 { g.eval(V3::from(v)).x } else { 0.0 }
                });
                let approx = hemisphere_integral_factor(lambda, cb);
                let full = sphere_integral_factor(lambda);
                assert!((approx - exact).abs() <= 0.03 * full, "λ={lambda} cosβ={cb}: {approx} vs {exact}");
            }
        }
    }

    #[test]
    fn taped_product_matches_plain() {
        let g1 = sg([0.3, 0.1, 0.9], 3.0, [0.5, 1.0, 0.2]);
        let g2 = sg([-0.4, 0.7, 0.2], 11.0, [1.2, 0.3, 0.9]);
        let tape = Tape::new();
        let x = tape.constant(0.0);
        let p = g1.lift(x).product(&g2.lift(x)).unwrap();
        let q = g1.product(&g2).unwrap();
        assert!(close(p.sharpness.value(), q.sharpness, 1e-15));
        assert!(close(p.amplitude.y.value(), q.amplitude.y, 1e-15));
    }

    fn unit() -> impl Strategy<Value = Vec3> {
        (-1.0..1.0f64, 0.0..(2.0 * PI)).prop_map(|(z, p)| {
            let s = (1.0 - z * z).sqrt();
            V3::new(s * p.cos(), s * p.sin(), z)
        })
    }

    fn lobe() -> impl Strategy<Value = SphericalGaussian> {
        (unit(), 0.1..100.0f64, prop::array::uniform3(0.0..3.0f64))
            .prop_map(|(axis, l, a)| SphericalGaussian::new(axis, l, a.into()))
    }

    proptest! {
        #[test]
        fn product_law(g1 in lobe(), g2 in lobe(), v in unit()) {
            if let Ok(p) = g1.product(&g2) {
                let lhs = p.eval(v);
                let rhs = g1.eval(v).hadamard(g2.eval(v));
                for (a, b) in lhs.to_array().iter().zip(rhs.to_array()) {
                    prop_assert!((a - b).abs() <= 1e-10 * b.abs() + 1e-300, "{a} vs {b}");
                }
            }
        }

        #[test]
        fn integral_decreases_in_sharpness(l in 0.1..400.0f64, dl in 0.01..50.0f64) {
            let a = sg([0., 0., 1.], l, [1., 1., 1.]).integral().x;
            let b = sg([0., 0., 1.], l + dl, [1., 1., 1.]).integral().x;
            prop_assert!(b < a);
        }
    }
}
