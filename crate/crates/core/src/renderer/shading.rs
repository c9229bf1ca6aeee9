//! Closed-form SG shading of a single surface point under distant light.

use std::f64::consts::PI;

use crate::appearance::{roughness_to_sharpness, Material};
use crate::diff::{Rgb, Scalar, Vec3, V3};
use crate::sg::{SgProduct, SphericalGaussian};

pub const COSINE_SHARPNESS: f64 = 0.0315;
pub const COSINE_AMPLITUDE: f64 = 32.7080;
pub const COSINE_OFFSET: f64 = 31.7003;
/// Normal-incidence reflectance of the Fresnel term.
pub const F0: f64 = 0.04;
pub const GRAZING_GUARD: f64 = 1e-4;

/// `ν·n ≈ sg(ν) - offset`.
#[derive(Clone, Copy, Debug)]
pub struct CosineLobe<S = f64> {
    pub sg: SphericalGaussian<S>,
    pub offset: f64,
}

impl<S: Scalar> CosineLobe<S> {
    pub fn eval(&self, v: Vec3) -> S {
        self.sg.eval_at(v).x - self.offset
    }
}

pub fn cosine_sg<S: Scalar>(n: V3<S>) -> CosineLobe<S> {
    let like = n.x;
    CosineLobe {
        sg: SphericalGaussian {
            axis: n,
            sharpness: like.lift(COSINE_SHARPNESS),
            amplitude: V3::splat(like.lift(COSINE_AMPLITUDE)),
        },
        offset: COSINE_OFFSET,
    }
}

/// Fresnel-Schlick times the separable Smith term evaluated at the mirror
/// direction, with the `1/(4 (n·l)(n·v))` denominator folded in.
pub fn fresnel_shadowing<S: Scalar>(cos_view: S, roughness: S) -> S {
    let c = cos_view.clamp(GRAZING_GUARD, 1.0);
    let f = (-c + 1.0).powf(5.0) * (1.0 - F0) + F0;
    let k = (roughness + 1.0) * (roughness + 1.0) / 8.0;
    let d = (c * (-k + 1.0) + k) * 2.0;
    f / (d * d)
}

/// Specular lobe warped from half-vector space into incident directions.
pub fn specular_lobe<S: Scalar>(view: Vec3, n: V3<S>, roughness: S, specular: Rgb<S>) -> SphericalGaussian<S> {
    let cos_view = n.dot_const(view);
    let c = cos_view.clamp(GRAZING_GUARD, 1.0);
    let axis = n.scale(cos_view * 2.0) - view.lift(cos_view);
    SphericalGaussian {
        axis: axis.normalize(),
        sharpness: roughness_to_sharpness(roughness) / (c * 4.0),
        amplitude: specular.scale(fresnel_shadowing(cos_view, roughness)),
    }
}

/// `∫_{Ω+} g(ω) (ω·n) dω` using the cosine lobe and hemispherical SG
/// integrals.
pub fn cosine_weighted_integral<S: Scalar>(g: &SphericalGaussian<S>, n: V3<S>, cos: &CosineLobe<S>) -> Rgb<S> {
    let lobe = match g.product_or_constant(&cos.sg) {
        SgProduct::Lobe(p) => p.hemisphere_integral(n),
        SgProduct::Constant(c) => c.scale_f(2.0 * PI),
    };
    lobe - g.hemisphere_integral(n).scale_f(cos.offset)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShadingTerms {
    pub diffuse: bool,
    pub specular: bool,
}

impl Default for ShadingTerms {
    fn default() -> Self {
        Self {
            diffuse: true,
            specular: true,
        }
    }
}

/// Outgoing radiance towards `view` (pointing from the surface to the eye)
/// at a point with shading normal `n`. Each light lobe's diffuse and
/// specular contributions are clamped at zero separately. Specular is
/// skipped when the shading normal faces away from the viewer.
pub fn shade<S: Scalar>(
    lights: &[SphericalGaussian<S>],
    n: V3<S>,
    view: Vec3,
    material: &Material<S>,
    terms: ShadingTerms,
) -> Rgb<S> {
    let zero = n.x.zero_like();
    let mut out = V3::splat(zero);
    let cos = cosine_sg(n);
    let fd = material.albedo.scale_f(1.0 / PI);
    let spec = (terms.specular && n.dot_const(view).value() > 0.0)
        .then(|| specular_lobe(view, n, material.roughness_clamped(), material.specular));
    for light in lights {
        if terms.diffuse {
            out = out + fd.hadamard(cosine_weighted_integral(light, n, &cos)).max0();
        }
        if let Some(s) = &spec {
            let term = match light.product_or_constant(s) {
                SgProduct::Lobe(ls) => cosine_weighted_integral(&ls, n, &cos),
                SgProduct::Constant(c) => {
                    let k = cos.sg.hemisphere_integral(n).x - zero.lift(2.0 * PI * cos.offset);
                    c.scale(k)
                }
            };
            out = out + term.max0();
        }
    }
    out
}

/// Clamp to `[0, 1]` then gamma `1/2.2`.
pub fn tonemap<S: Scalar>(x: S) -> S {
    x.clamp(0.0, 1.0).powf(1.0 / 2.2)
}

pub fn tonemap_rgb<S: Scalar>(c: Rgb<S>) -> Rgb<S> {
    c.map(tonemap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tape;

    #[test]
    fn cosine_endpoints() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let c = cosine_sg(n);
        assert!((c.eval(n) - 1.0077).abs() < 1e-4);
        assert!((c.eval(Vec3::new(1.0, 0.0, 0.0)) + 0.006).abs() < 1e-3);
    }

    #[test]
    fn normal_incidence_lobe() {
        let n = Vec3::new(0.0, 1.0, 0.0);
        let g = specular_lobe(n, n, 0.5, Rgb::splat(1.0));
        assert!((g.axis - n).norm() < 1e-12);
        assert!((g.sharpness - roughness_to_sharpness(0.5) / 4.0).abs() < 1e-12);
        let g2 = specular_lobe(n, n, 0.5, Rgb::splat(2.0));
        assert!((g2.amplitude - g.amplitude * 2.0).norm() < 1e-15);
    }

    #[test]
    fn zero_light_gives_black() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let light = SphericalGaussian::new(n, 10.0, Rgb::ZERO);
        let m = Material {
            albedo: Rgb::splat(0.7),
            specular: Rgb::splat(0.5),
            roughness: 0.3,
        };
        assert_eq!(shade(&[light], n, n, &m, ShadingTerms::default()), Rgb::ZERO);
    }

    #[test]
    fn back_facing_normal_drops_specular_only() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let view = Vec3::new(1.0, 0.0, -0.2).normalize();
        let light = SphericalGaussian::new(Vec3::new(0.0, 0.3, 1.0), 4.0, Rgb::splat(1.0));
        let m = Material {
            albedo: Rgb::splat(0.7),
            specular: Rgb::splat(0.9),
            roughness: 0.3,
        };
        let full = shade(&[light], n, view, &m, ShadingTerms::default());
        let diffuse = shade(&[light], n, view, &m, ShadingTerms { diffuse: true, specular: false });
        assert_eq!(full, diffuse);
        assert!(diffuse.x > 0.0);
    }

    #[test]
    fn tonemap_gradient_at_zero_is_zero() {
        let tape = Tape::new();
        let x = tape.param(0.0);
        assert_eq!(tape.backward(tonemap(x)).unwrap(), vec![0.0]);
        assert!((tonemap(0.5f64) - 0.5f64.powf(1.0 / 2.2)).abs() < 1e-15);
        assert_eq!(tonemap(3.0f64), 1.0);
    }
}
