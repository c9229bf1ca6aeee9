//! Learnable appearance fields: the SVBRDF network and the normal-offset
//! network, both fed through fixed positional encodings.

mod encoding;
mod mlp;

use std::f64::consts::{FRAC_PI_4, PI};
use std::ops::Range;

use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use encoding::{EncodingConfig, EncodingMode, PositionalEncoding};
pub use mlp::{Activation, Mlp, MlpTrace};

use crate::diff::{Scalar, Vec3, V3};

/// Margin keeping predicted spherical angles inside their open ranges.
pub const ANGLE_MARGIN: f64 = 1e-4;
pub const ROUGHNESS_MIN: f64 = 0.01;
/// Number of SVBRDF channels: diffuse rgb, specular rgb, roughness.
pub const SVBRDF_CHANNELS: usize = 7;
pub const NORMAL_INPUTS: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    #[default]
    None,
    X,
    Y,
    Z,
}

impl std::str::FromStr for Symmetry {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Symmetry::None),
            "x" => Ok(Symmetry::X),
            "y" => Ok(Symmetry::Y),
            "z" => Ok(Symmetry::Z),
            other => Err(format!("unknown symmetry axis '{other}'")),
        }
    }
}

/// Mirrors the chosen coordinate onto its nonnegative half.
pub fn symmetry_prior(x: Vec3, axis: Symmetry) -> Vec3 {
    match axis {
        Symmetry::None => x,
        Symmetry::X => Vec3::new(x.x.abs(), x.y, x.z),
        Symmetry::Y => Vec3::new(x.x, x.y.abs(), x.z),
        Symmetry::Z => Vec3::new(x.x, x.y, x.z.abs()),
    }
}

/// Specular lobe sharpness `2 / r^2`.
pub fn roughness_to_sharpness<S: Scalar>(r: S) -> S {
    (r * r).powf(-1.0) * 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppearanceConfig {
    pub hidden_width: usize,
    pub brdf_encoding: EncodingConfig,
    pub normal_encoding: EncodingConfig,
    /// When false the renderer is diffuse-only.
    pub specular: bool,
    /// When false face normals are used unchanged.
    pub normal_net: bool,
    pub symmetry: Symmetry,
}

impl Default for AppearanceConfig {
    fn default() -> Self {
        Self {
            hidden_width: 256,
            brdf_encoding: EncodingConfig::gaussian(128, 12.0),
            normal_encoding: EncodingConfig::gaussian(64, 4.0),
            specular: true,
            normal_net: true,
            symmetry: Symmetry::None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material<S = f64> {
    pub albedo: V3<S>,
    pub specular: V3<S>,
    /// Raw network roughness in (0, 1); clamp before use.
    pub roughness: S,
}

impl<S: Scalar> Material<S> {
    /// Reads channels in network output order.
    pub fn from_channels(c: [S; SVBRDF_CHANNELS]) -> Self {
        Self {
            albedo: V3::new(c[0], c[1], c[2]),
            specular: V3::new(c[3], c[4], c[5]),
            roughness: c[6],
        }
    }

    pub fn roughness_clamped(&self) -> S {
        self.roughness.clamp(ROUGHNESS_MIN, 1.0)
    }
}

/// `(theta, phi)` with `theta = atan2(y, x)` in `[0, 2π)` and `phi = acos(z)`.
pub fn normal_to_angles(n: Vec3) -> (f64, f64) {
    let theta = n.y.atan2(n.x).rem_euclid(2.0 * PI);
    let phi = n.z.clamp(-1.0, 1.0).acos();
    (theta, phi)
}

pub fn angles_to_normal<S: Scalar>(theta: S, phi: S) -> V3<S> {
    let sp = phi.sin();
    V3::new(sp * theta.cos(), sp * theta.sin(), phi.cos())
}

/// Applies an angular offset to `n`, clamping the result inside the open
/// angle ranges.
pub fn offset_normal<S: Scalar>(n: Vec3, d_theta: S, d_phi: S) -> V3<S> {
    let (theta, phi) = normal_to_angles(n);
    let t = (d_theta + theta).clamp(ANGLE_MARGIN, 2.0 * PI - ANGLE_MARGIN);
    let p = (d_phi + phi).clamp(ANGLE_MARGIN, PI - ANGLE_MARGIN);
    angles_to_normal(t, p)
}

/// A surface point presented to the appearance networks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceQuery {
    pub point: Vec3,
    pub normal: Vec3,
}

/// Batched network outputs: `svbrdf` is `N x 7`, `offsets` is `N x 2`.
#[derive(Clone, Debug)]
pub struct AppearanceOutputs {
    pub svbrdf: Array2<f64>,
    pub offsets: Array2<f64>,
}

impl AppearanceOutputs {
    pub fn len(&self) -> usize {
        self.svbrdf.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn material(&self, i: usize) -> Material {
        let r = self.svbrdf.row(i);
        Material::from_channels(std::array::from_fn(|c| r[c]))
    }

    pub fn offset(&self, i: usize) -> (f64, f64) {
        (self.offsets[[i, 0]], self.offsets[[i, 1]])
    }
}

#[derive(Clone, Debug)]
pub struct AppearanceTrace {
    trunk: MlpTrace,
    heads: [MlpTrace; 3],
    normal: Option<MlpTrace>,
    outputs: AppearanceOutputs,
}

impl AppearanceTrace {
    pub fn outputs(&self) -> &AppearanceOutputs {
        &self.outputs
    }
}

/// Named parameter ranges within the flat layout of [`Appearance::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: &'static str,
    pub range: Range<usize>,
}

const HEAD_NAMES: [&str; 3] = ["diffuse_head", "specular_head", "roughness_head"];
const HEAD_DIMS: [usize; 3] = [3, 3, 1];

#[derive(Clone, Debug, PartialEq)]
pub struct Appearance {
    config: AppearanceConfig,
    brdf_pe: PositionalEncoding,
    normal_pe: PositionalEncoding,
    trunk: Mlp,
    heads: [Mlp; 3],
    normal: Mlp,
}

impl Appearance {
    pub fn new<R: Rng + ?Sized>(config: AppearanceConfig, rng: &mut R) -> Self {
        let brdf_pe = PositionalEncoding::new(&config.brdf_encoding, 3, rng);
        let normal_pe = PositionalEncoding::new(&config.normal_encoding, NORMAL_INPUTS, rng);
        Self::with_encodings(config, brdf_pe, normal_pe, rng)
    }

    pub fn with_encodings<R: Rng + ?Sized>(
        config: AppearanceConfig,
        brdf_pe: PositionalEncoding,
        normal_pe: PositionalEncoding,
        rng: &mut R,
    ) -> Self {
        let w = config.hidden_width;
        let trunk = Mlp::new(&[brdf_pe.output_dim(), w, w], Activation::Silu, Activation::Silu, false, rng);
        let heads = HEAD_DIMS.map(|d| Mlp::new(&[w, w, w, d], Activation::Silu, Activation::Sigmoid, false, rng));
        let normal = Mlp::new(
            &[normal_pe.output_dim(), w, w, 2],
            Activation::Silu,
            Activation::ScaledTanh(FRAC_PI_4),
            true,
            rng,
        );
        Self {
            config,
            brdf_pe,
            normal_pe,
            trunk,
            heads,
            normal,
        }
    }

    pub fn config(&self) -> &AppearanceConfig {
        &self.config
    }

    /// Toggles flags that do not change the parameter layout.
    pub fn set_flags(&mut self, specular: bool, normal_net: bool, symmetry: Symmetry) {
        self.config.specular = specular;
        self.config.normal_net = normal_net;
        self.config.symmetry = symmetry;
    }

    pub fn brdf_encoding(&self) -> &PositionalEncoding {
        &self.brdf_pe
    }

    pub fn normal_encoding(&self) -> &PositionalEncoding {
        &self.normal_pe
    }

    fn networks(&self) -> [&Mlp; 5] {
        [&self.trunk, &self.heads[0], &self.heads[1], &self.heads[2], &self.normal]
    }

    fn networks_mut(&mut self) -> [&mut Mlp; 5] {
        let [h0, h1, h2] = &mut self.heads;
        [&mut self.trunk, h0, h1, h2, &mut self.normal]
    }

    pub fn param_count(&self) -> usize {
        self.networks().iter().map(|m| m.params().len()).sum()
    }

    pub fn param_blocks(&self) -> Vec<ParamBlock> {
        let names = ["svbrdf_trunk", HEAD_NAMES[0], HEAD_NAMES[1], HEAD_NAMES[2], "normal_net"];
        let mut off = 0;
        self.networks()
            .iter()
            .zip(names)
            .map(|(m, name)| {
                let range = off..off + m.params().len();
                off = range.end;
                ParamBlock { name, range }
            })
            .collect()
    }

    pub fn params(&self) -> Vec<f64> {
        self.networks().iter().flat_map(|m| m.params().iter().copied()).collect()
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut off = 0;
        for m in self.networks_mut() {
            let n = m.params().len();
            m.params_mut().copy_from_slice(&params[off..off + n]);
            off += n;
        }
    }

    fn brdf_input(&self, queries: &[SurfaceQuery]) -> Array2<f64> {
        let pts: Vec<[f64; 3]> = queries
            .iter()
            .map(|q| symmetry_prior(q.point, self.config.symmetry).to_array())
            .collect();
        self.brdf_pe.encode_batch(pts.iter().map(|p| p.as_slice()))
    }

    fn normal_input(&self, queries: &[SurfaceQuery]) -> Array2<f64> {
        let rows: Vec<[f64; NORMAL_INPUTS]> = queries
            .iter()
            .map(|q| {
                let (t, p) = normal_to_angles(q.normal);
                [q.point.x, q.point.y, q.point.z, t, p]
            })
            .collect();
        self.normal_pe.encode_batch(rows.iter().map(|r| r.as_slice()))
    }

    fn assemble(&self, heads: [&Array2<f64>; 3], offsets: Array2<f64>) -> AppearanceOutputs {
        let n = heads[0].nrows();
        let mut svbrdf = Array2::zeros((n, SVBRDF_CHANNELS));
        svbrdf.slice_mut(s![.., 0..3]).assign(heads[0]);
        svbrdf.slice_mut(s![.., 3..6]).assign(heads[1]);
        svbrdf.slice_mut(s![.., 6..7]).assign(heads[2]);
        AppearanceOutputs { svbrdf, offsets }
    }

    pub fn forward(&self, queries: &[SurfaceQuery]) -> AppearanceOutputs {
        let hidden = self.trunk.forward(&self.brdf_input(queries));
        let outs = self.heads.each_ref().map(|h| h.forward(&hidden));
        let offsets = if self.config.normal_net {
            self.normal.forward(&self.normal_input(queries))
        } else {
            Array2::zeros((queries.len(), 2))
        };
        self.assemble([&outs[0], &outs[1], &outs[2]], offsets)
    }

    pub fn forward_traced(&self, queries: &[SurfaceQuery]) -> AppearanceTrace {
        let trunk = self.trunk.forward_traced(self.brdf_input(queries));
        let heads = self.heads.each_ref().map(|h| h.forward_traced(trunk.output().clone()));
        let normal = self
            .config
            .normal_net
            .then(|| self.normal.forward_traced(self.normal_input(queries)));
        let offsets = normal
            .as_ref()
            .map(|t| t.output().clone())
            .unwrap_or_else(|| Array2::zeros((queries.len(), 2)));
        let outputs = self.assemble([heads[0].output(), heads[1].output(), heads[2].output()], offsets);
        AppearanceTrace {
            trunk,
            heads,
            normal,
            outputs,
        }
    }

    /// Accumulates `d loss / d params` given gradients on the outputs.
    pub fn backward(
        &self,
        trace: &AppearanceTrace,
        d_svbrdf: &Array2<f64>,
        d_offsets: &Array2<f64>,
        grad: &mut [f64],
    ) {
        assert_eq!(grad.len(), self.param_count());
        let blocks = self.param_blocks();
        let cols = [0..3, 3..6, 6..7];
        let mut d_hidden: Option<Array2<f64>> = None;
        for (i, head) in self.heads.iter().enumerate() {
            let d_out = d_svbrdf.slice(s![.., cols[i].clone()]).to_owned();
            let d = head.backward(&trace.heads[i], &d_out, &mut grad[blocks[i + 1].range.clone()]);
            d_hidden = Some(match d_hidden {
                Some(acc) => acc + d,
                None => d,
            });
        }
        if let Some(d_hidden) = d_hidden {
            self.trunk
                .backward(&trace.trunk, &d_hidden, &mut grad[blocks[0].range.clone()]);
        }
        if let Some(t) = &trace.normal {
            self.normal.backward(t, d_offsets, &mut grad[blocks[4].range.clone()]);
        }
    }

    pub fn predict_svbrdf(&self, x: Vec3) -> Material {
        self.forward(&[SurfaceQuery {
            point: x,
            normal: Vec3::new(0.0, 0.0, 1.0),
        }])
        .material(0)
    }

    /// Shading normal for a surface point with face normal `n`.
    pub fn predict_normal(&self, x: Vec3, n: Vec3) -> Vec3 {
        let q = SurfaceQuery { point: x, normal: n };
        let out = self.forward(&[q]);
        let (dt, dp) = out.offset(0);
        self.shading_normal(n, dt, dp)
    }

    pub fn shading_normal<S: Scalar>(&self, n: Vec3, d_theta: S, d_phi: S) -> V3<S> {
        if self.config.normal_net {
            offset_normal(n, d_theta, d_phi)
        } else {
            n.lift(d_theta)
        }
    }

    /// Parameter count implied by a config and encoder output sizes.
    pub fn expected_param_count(config: &AppearanceConfig, brdf_features: usize, normal_features: usize) -> usize {
        let w = config.hidden_width;
        Mlp::count_params(&[brdf_features, w, w])
            + HEAD_DIMS.iter().map(|&d| Mlp::count_params(&[w, w, w, d])).sum::<usize>()
            + Mlp::count_params(&[normal_features, w, w, 2])
    }

    /// Rebuilds from stored parts; used by checkpoint loading.
    pub fn from_parts(
        config: AppearanceConfig,
        brdf_pe: PositionalEncoding,
        normal_pe: PositionalEncoding,
        params: &[f64],
    ) -> Self {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut app = Self::with_encodings(config, brdf_pe, normal_pe, &mut rng);
        app.set_params(params);
        app
    }
}
