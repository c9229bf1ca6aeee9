//! Image formation: ray casting, per-hit SG shading, tone mapping and
//! background compositing, plus the reverse pass used for training.

mod shading;

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use shading::{
    cosine_sg, cosine_weighted_integral, fresnel_shadowing, shade, specular_lobe, tonemap, tonemap_rgb,
    CosineLobe, ShadingTerms, COSINE_AMPLITUDE, COSINE_OFFSET, COSINE_SHARPNESS, F0, GRAZING_GUARD,
};

use crate::appearance::{Appearance, AppearanceTrace, Material, SurfaceQuery, ROUGHNESS_MIN, SVBRDF_CHANNELS};
use crate::diff::{Rgb, Scalar, Tape, Var, Vec3, V3};
use crate::geometry::{Camera, RayHit, Scene};
use crate::imageio::{write_png, Image, ImageError};
use crate::lighting::{EnvironmentMap, PARAMS_PER_LOBE};
use crate::sg::SphericalGaussian;
use crate::style::Style;

/// Rows evaluated per network batch in forward-only renders.
const FORWARD_BATCH: usize = 4096;
/// Hits per work item in the reverse pass; gradients are reduced in item order.
const BACKWARD_CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid material override: {0}")]
    InvalidOverride(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Background {
    #[default]
    White,
    Black,
}

impl Background {
    pub fn color(self) -> Rgb {
        match self {
            Background::White => Rgb::splat(1.0),
            Background::Black => Rgb::ZERO,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Background::White => Background::Black,
            Background::Black => Background::White,
        }
    }
}

impl FromStr for Background {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "white" => Ok(Background::White),
            "black" => Ok(Background::Black),
            other => Err(format!("unknown background '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Override {
    Set(f64),
    Scale(f64),
}

/// Post-network changes to roughness and specular amplitude.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MaterialEdit {
    pub roughness: Option<Override>,
    pub specular: Option<Override>,
}

impl MaterialEdit {
    pub fn validate(&self) -> Result<(), RenderError> {
        let check = |o: Option<Override>, lo: f64, what: &str| match o {
            Some(Override::Set(v)) if !(lo..=1.0).contains(&v) => Err(RenderError::InvalidOverride(format!(
                "{what} value {v} outside [{lo}, 1]"
            ))),
            Some(Override::Scale(s)) if !(s.is_finite() && s > 0.0) => Err(RenderError::InvalidOverride(
                format!("{what} scale {s} must be positive"),
            )),
            _ => Ok(()),
        };
        check(self.roughness, ROUGHNESS_MIN, "roughness")?;
        check(self.specular, 0.0, "specular")
    }

    pub fn apply<S: Scalar>(&self, m: Material<S>) -> Material<S> {
        let mut out = m;
        match self.roughness {
            Some(Override::Set(v)) => out.roughness = m.roughness.lift(v),
            Some(Override::Scale(s)) => out.roughness = m.roughness * s,
            None => {}
        }
        match self.specular {
            Some(Override::Set(v)) => out.specular = V3::splat(m.roughness.lift(v)),
            Some(Override::Scale(s)) => out.specular = m.specular.scale_f(s),
            None => {}
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RenderOptions {
    pub background: Background,
    pub terms: ShadingTerms,
    pub edit: MaterialEdit,
}

/// Options with a validated material edit applied.
pub fn edit_material(options: &RenderOptions, edit: MaterialEdit) -> Result<RenderOptions, RenderError> {
    edit.validate()?;
    Ok(RenderOptions { edit, ..*options })
}

#[derive(Clone, Debug)]
pub struct RenderedView {
    pub camera: Camera,
    /// Tone-mapped image composited over the background.
    pub image: Image,
    /// Linear radiance before tone mapping; zero where the mask is unset.
    pub radiance: Image,
    pub mask: Vec<bool>,
}

impl RenderedView {
    pub fn hit_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn mask_image(&self) -> Image {
        let px = self
            .mask
            .iter()
            .map(|&m| if m { Rgb::splat(1.0) } else { Rgb::ZERO })
            .collect();
        Image::from_pixels(self.image.width(), self.image.height(), px)
    }
}

#[derive(Clone, Copy, Debug)]
struct HitSample {
    pixel: usize,
    hit: RayHit,
    /// Unit vector from the surface towards the eye.
    view: Vec3,
}

fn cast_view(scene: &Scene, camera: &Camera) -> (Vec<HitSample>, Vec<bool>) {
    let w = camera.intrinsics().width;
    let rays = camera.rays();
    let hits: Vec<Option<RayHit>> = rays.par_iter().map(|r| scene.cast_ray(r)).collect();
    let mask = hits.iter().map(Option::is_some).collect();
    let samples = hits
        .into_iter()
        .zip(&rays)
        .enumerate()
        .filter_map(|(pixel, (h, r))| {
            h.map(|hit| HitSample {
                pixel,
                hit,
                view: -r.direction,
            })
        })
        .collect();
    debug_assert_eq!(rays.len() % w, 0);
    (samples, mask)
}

fn queries(hits: &[HitSample]) -> Vec<SurfaceQuery> {
    hits.iter()
        .map(|h| SurfaceQuery {
            point: h.hit.point,
            normal: h.hit.normal,
        })
        .collect()
}

fn effective_terms(appearance: &Appearance, options: &RenderOptions) -> ShadingTerms {
    ShadingTerms {
        diffuse: options.terms.diffuse,
        specular: options.terms.specular && appearance.config().specular,
    }
}

fn shade_sample<S: Scalar>(
    appearance: &Appearance,
    lights: &[SphericalGaussian<S>],
    sample: &HitSample,
    material: Material<S>,
    offset: (S, S),
    options: &RenderOptions,
) -> Rgb<S> {
    let m = options.edit.apply(material);
    let n = appearance.shading_normal(sample.hit.normal, offset.0, offset.1);
    shade(lights, n, sample.view, &m, effective_terms(appearance, options))
}

fn assemble(camera: &Camera, hits: &[HitSample], mask: Vec<bool>, radiance: &[Rgb], background: Background) -> RenderedView {
    let (w, h) = (camera.intrinsics().width, camera.intrinsics().height);
    let mut lin = Image::new(w, h, Rgb::ZERO);
    let mut img = Image::new(w, h, background.color());
    for (s, &l) in hits.iter().zip(radiance) {
        lin.pixels_mut()[s.pixel] = l;
        img.pixels_mut()[s.pixel] = tonemap_rgb(l);
    }
    RenderedView {
        camera: *camera,
        image: img,
        radiance: lin,
        mask,
    }
}

fn shade_forward(style: &Style, hits: &[HitSample], options: &RenderOptions) -> Vec<Rgb> {
    let lights = style.env.lobes();
    let mut radiance = Vec::with_capacity(hits.len());
    for chunk in hits.chunks(FORWARD_BATCH) {
        let out = style.appearance.forward(&queries(chunk));
        let shaded: Vec<Rgb> = chunk
            .par_iter()
            .enumerate()
            .map(|(i, s)| shade_sample(&style.appearance, &lights, s, out.material(i), out.offset(i), options))
            .collect();
        radiance.extend(shaded);
    }
    radiance
}

/// Renders one view of `scene` with `style`.
pub fn render_view(scene: &Scene, camera: &Camera, style: &Style, options: &RenderOptions) -> RenderedView {
    let (hits, mask) = cast_view(scene, camera);
    let radiance = shade_forward(style, &hits, options);
    assemble(camera, &hits, mask, &radiance, options.background)
}

/// Renders every camera with `env` in place of the style's own lighting.
pub fn relight(
    scene: &Scene,
    style: &Style,
    env: &EnvironmentMap,
    cameras: &[Camera],
    options: &RenderOptions,
) -> Vec<RenderedView> {
    let relit = Style {
        appearance: style.appearance.clone(),
        env: env.clone(),
    };
    cameras
        .iter()
        .map(|c| render_view(scene, c, &relit, options))
        .collect()
}

/// A rendered view with everything needed for [`backward_view`].
#[derive(Clone, Debug)]
pub struct TracedView {
    pub view: RenderedView,
    hits: Vec<HitSample>,
    trace: AppearanceTrace,
}

pub fn render_view_traced(scene: &Scene, camera: &Camera, style: &Style, options: &RenderOptions) -> TracedView {
    let (hits, mask) = cast_view(scene, camera);
    let trace = style.appearance.forward_traced(&queries(&hits));
    let out = trace.outputs();
    let lights = style.env.lobes();
    let radiance: Vec<Rgb> = hits
        .par_iter()
        .enumerate()
        .map(|(i, s)| shade_sample(&style.appearance, &lights, s, out.material(i), out.offset(i), options))
        .collect();
    let view = assemble(camera, &hits, mask, &radiance, options.background);
    TracedView { view, hits, trace }
}

const NET_OUTPUTS: usize = SVBRDF_CHANNELS + 2;

/// Accumulates `d loss / d style params` into `grad` (flat style layout)
/// given `d_image`, the gradient of the loss with respect to the displayed
/// image of `traced`.
pub fn backward_view(traced: &TracedView, style: &Style, options: &RenderOptions, d_image: &Image, grad: &mut [f64]) {
    assert_eq!(grad.len(), style.param_count());
    assert_eq!(d_image.pixels().len(), traced.view.image.pixels().len());
    let out = traced.trace.outputs();
    let decoded = style.env.decoded();
    let n_env = decoded.len();
    let chunks: Vec<(Vec<[f64; NET_OUTPUTS]>, Vec<f64>)> = traced
        .hits
        .par_chunks(BACKWARD_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut tape = Tape::with_capacity(4096);
            let mut env_grad = vec![0.0; n_env];
            let mut local = vec![0.0; NET_OUTPUTS + n_env];
            let mut net = Vec::with_capacity(chunk.len());
            for (j, s) in chunk.iter().enumerate() {
                let i = c * BACKWARD_CHUNK + j;
                let g = d_image.pixels()[s.pixel];
                if g == Rgb::ZERO {
                    net.push([0.0; NET_OUTPUTS]);
                    continue;
                }
                tape.clear();
                local.fill(0.0);
                {
                    let t = &tape;
                    let svbrdf: [Var; SVBRDF_CHANNELS] = std::array::from_fn(|k| t.param(out.svbrdf[[i, k]]));
                    let offs = (t.param(out.offsets[[i, 0]]), t.param(out.offsets[[i, 1]]));
                    let leaves: Vec<Var> = decoded.iter().map(|&v| t.param(v)).collect();
                    let lights: Vec<SphericalGaussian<Var>> = leaves
                        .chunks_exact(PARAMS_PER_LOBE)
                        .map(|l| SphericalGaussian {
                            axis: V3::new(l[0], l[1], l[2]),
                            sharpness: l[3],
                            amplitude: V3::new(l[4], l[5], l[6]),
                        })
                        .collect();
                    let l = shade_sample(&style.appearance, &lights, s, Material::from_channels(svbrdf), offs, options);
                    let tm = tonemap_rgb(l);
                    let objective = tm.x * g.x + tm.y * g.y + tm.z * g.z;
                    t.backward_into(objective, 1.0, &mut local).expect("shading is domain safe");
                }
                net.push(std::array::from_fn(|k| local[k]));
                for (e, v) in env_grad.iter_mut().zip(&local[NET_OUTPUTS..]) {
                    *e += v;
                }
            }
            (net, env_grad)
        })
        .collect();

    let n = traced.hits.len();
    let mut d_svbrdf = Array2::zeros((n, SVBRDF_CHANNELS));
    let mut d_offsets = Array2::zeros((n, 2));
    let mut env_grad = vec![0.0; n_env];
    let mut row = 0;
    for (net, eg) in chunks {
        for r in net {
            for k in 0..SVBRDF_CHANNELS {
                d_svbrdf[[row, k]] = r[k];
            }
            d_offsets[[row, 0]] = r[SVBRDF_CHANNELS];
            d_offsets[[row, 1]] = r[SVBRDF_CHANNELS + 1];
            row += 1;
        }
        for (e, v) in env_grad.iter_mut().zip(eg) {
            *e += v;
        }
    }
    let split = style.env_offset();
    style
        .appearance
        .backward(&traced.trace, &d_svbrdf, &d_offsets, &mut grad[..split]);
    for (g, v) in grad[split..].iter_mut().zip(style.env.backprop_decoded(&env_grad)) {
        *g += v;
    }
}

/// Per-pixel channel visualizations sharing the render's mask.
#[derive(Clone, Debug)]
pub struct Components {
    pub render: Image,
    pub normal: Image,
    pub diffuse: Image,
    pub roughness: Image,
    pub specular: Image,
    pub envmap: Image,
    pub mask: Image,
}

impl Components {
    pub fn named(&self) -> [(&'static str, &Image); 7] {
        [
            ("render", &self.render),
            ("normal", &self.normal),
            ("diffuse", &self.diffuse),
            ("roughness", &self.roughness),
            ("specular", &self.specular),
            ("envmap", &self.envmap),
            ("mask", &self.mask),
        ]
    }

    /// Writes `<stem>_<component>.png` files into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<PathBuf>, RenderError> {
        let mut paths = Vec::new();
        for (name, img) in self.named() {
            let p = dir.as_ref().join(format!("{stem}_{name}.png"));
            write_png(&p, img)?;
            paths.push(p);
        }
        Ok(paths)
    }
}

pub fn export_components(scene: &Scene, camera: &Camera, style: &Style, options: &RenderOptions) -> Components {
    let (hits, mask) = cast_view(scene, camera);
    let radiance = shade_forward(style, &hits, options);
    let view = assemble(camera, &hits, mask, &radiance, options.background);
    let (w, h) = (view.image.width(), view.image.height());
    let bg = options.background.color();
    let mut normal = Image::new(w, h, bg);
    let mut diffuse = Image::new(w, h, bg);
    let mut roughness = Image::new(w, h, bg);
    let mut specular = Image::new(w, h, bg);
    for chunk in hits.chunks(FORWARD_BATCH) {
        let out = style.appearance.forward(&queries(chunk));
        for (i, s) in chunk.iter().enumerate() {
            let m = options.edit.apply(out.material(i));
            let (dt, dp) = out.offset(i);
            let n = style.appearance.shading_normal(s.hit.normal, dt, dp);
            normal.pixels_mut()[s.pixel] = (n + Rgb::splat(1.0)) * 0.5;
            diffuse.pixels_mut()[s.pixel] = m.albedo;
            roughness.pixels_mut()[s.pixel] = Rgb::splat(m.roughness_clamped());
            specular.pixels_mut()[s.pixel] = m.specular;
        }
    }
    let envmap = style.env.rasterize(w.max(2), (w / 2).max(1)).map(tonemap_rgb);
    Components {
        mask: view.mask_image(),
        render: view.image,
        normal,
        diffuse,
        roughness,
        specular,
        envmap,
    }
}
