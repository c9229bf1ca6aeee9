//! Distant illumination as a sum of spherical Gaussians.
//!
//! Each lobe is stored as 7 raw values: an unnormalized axis (3), a raw
//! sharpness and a raw rgb amplitude. Sharpness and amplitude pass through
//! softplus, so any raw values describe a valid environment.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::diff::{sigmoid, softplus_inverse, Rgb, Scalar, Vec3, V3};
use crate::imageio::Image;
use crate::optimization::{AdamConfig, AdamW};
use crate::sg::{sphere_integral_factor, SphericalGaussian};

pub const PARAMS_PER_LOBE: usize = 7;
pub const DEFAULT_TOTAL_ENERGY: f64 = 6.25;
pub const DEFAULT_LOBES: usize = 32;

#[derive(Debug, Error)]
pub enum LightingError {
    #[error("environment needs at least one lobe")]
    NoLobes,
    #[error("raw parameter count {0} is not a positive multiple of 7")]
    BadLength(usize),
    #[error("environment image contains non-finite pixels")]
    NonFinite,
    #[error("malformed lobe line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Decodes one lobe from its raw parameters.
pub fn lobe_from_raw<S: Scalar>(raw: &[S]) -> SphericalGaussian<S> {
    debug_assert_eq!(raw.len(), PARAMS_PER_LOBE);
    SphericalGaussian {
        axis: V3::new(raw[0], raw[1], raw[2]).normalize(),
        sharpness: raw[3].softplus(),
        amplitude: V3::new(raw[4].softplus(), raw[5].softplus(), raw[6].softplus()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentMap {
    raw: Vec<f64>,
}

impl EnvironmentMap {
    pub fn from_raw(raw: Vec<f64>) -> Result<Self, LightingError> {
        if raw.is_empty() || raw.len() % PARAMS_PER_LOBE != 0 {
            return Err(LightingError::BadLength(raw.len()));
        }
        Ok(Self { raw })
    }

    pub fn from_lobes(lobes: &[SphericalGaussian]) -> Result<Self, LightingError> {
        if lobes.is_empty() {
            return Err(LightingError::NoLobes);
        }
        let mut raw = Vec::with_capacity(lobes.len() * PARAMS_PER_LOBE);
        for g in lobes {
            let a = g.axis.normalize();
            raw.extend_from_slice(&[a.x, a.y, a.z, softplus_inverse(g.sharpness)]);
            raw.extend(g.amplitude.to_array().map(softplus_inverse));
        }
        Ok(Self { raw })
    }

    pub fn lobe_count(&self) -> usize {
        self.raw.len() / PARAMS_PER_LOBE
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.raw
    }

    pub fn lobe(&self, k: usize) -> SphericalGaussian {
        lobe_from_raw(&self.raw[k * PARAMS_PER_LOBE..(k + 1) * PARAMS_PER_LOBE])
    }

    pub fn lobes(&self) -> Vec<SphericalGaussian> {
        (0..self.lobe_count()).map(|k| self.lobe(k)).collect()
    }

    /// Projects stored axes back to unit length; call after each update.
    pub fn renormalize_axes(&mut self) {
        for chunk in self.raw.chunks_exact_mut(PARAMS_PER_LOBE) {
            let a = Vec3::new(chunk[0], chunk[1], chunk[2]);
            let n = if a.norm() > 1e-12 { a.normalize() } else { Vec3::new(0.0, 0.0, 1.0) };
            chunk[..3].copy_from_slice(&n.to_array());
        }
    }

    /// Decoded values `[axis(3), sharpness, amplitude(3)]` for every lobe.
    pub fn decoded(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.raw.len());
        for g in self.lobes() {
            out.extend_from_slice(&g.axis.to_array());
            out.push(g.sharpness);
            out.extend_from_slice(&g.amplitude.to_array());
        }
        out
    }

    /// Chains gradients on [`Self::decoded`] values back to raw parameters.
    pub fn backprop_decoded(&self, d_decoded: &[f64]) -> Vec<f64> {
        assert_eq!(d_decoded.len(), self.raw.len());
        let mut out = vec![0.0; self.raw.len()];
        for ((raw, d), o) in self
            .raw
            .chunks_exact(PARAMS_PER_LOBE)
            .zip(d_decoded.chunks_exact(PARAMS_PER_LOBE))
            .zip(out.chunks_exact_mut(PARAMS_PER_LOBE))
        {
            let m = Vec3::new(raw[0], raw[1], raw[2]);
            let len = m.norm();
            let mu = m * (1.0 / len);
            let d_mu = Vec3::new(d[0], d[1], d[2]);
            let d_m = (d_mu - mu * mu.dot(d_mu)) * (1.0 / len);
            o[..3].copy_from_slice(&d_m.to_array());
            for i in 3..PARAMS_PER_LOBE {
                o[i] = d[i] * sigmoid(raw[i]);
            }
        }
        out
    }

    pub fn eval(&self, dir: Vec3) -> Rgb {
        self.lobes()
            .iter()
            .fold(Rgb::ZERO, |acc, g| acc + g.eval_at(dir))
    }

    pub fn total_energy(&self) -> f64 {
        self.lobes().iter().map(|g| g.energy()).sum()
    }

    /// Multiplies every amplitude by `s` (which must be positive).
    pub fn scaled(&self, s: f64) -> Self {
        let lobes: Vec<_> = self
            .lobes()
            .into_iter()
            .map(|g| SphericalGaussian { amplitude: g.amplitude * s, ..g })
            .collect();
        Self::from_lobes(&lobes).expect("nonempty")
    }

    /// One lobe per line: `mu_x mu_y mu_z sharpness a_r a_g a_b`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for g in self.lobes() {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {}",
                g.axis.x, g.axis.y, g.axis.z, g.sharpness, g.amplitude.x, g.amplitude.y, g.amplitude.z
            );
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, LightingError> {
        let mut lobes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| LightingError::Parse { line: i + 1, reason: e.to_string() })?;
            if vals.len() != PARAMS_PER_LOBE {
                return Err(LightingError::Parse {
                    line: i + 1,
                    reason: format!("expected 7 values, found {}", vals.len()),
                });
            }
            let g = SphericalGaussian::new(
                Vec3::new(vals[0], vals[1], vals[2]),
                vals[3],
                Rgb::new(vals[4], vals[5], vals[6]),
            );
            if !g.is_valid() {
                return Err(LightingError::Parse { line: i + 1, reason: "invalid lobe".into() });
            }
            lobes.push(g);
        }
        Self::from_lobes(&lobes)
    }

    /// Latitude-longitude preview sampled at pixel centers.
    pub fn rasterize(&self, width: usize, height: usize) -> Image {
        let lobes = self.lobes();
        Image::from_fn(width, height, |r, c| {
            let d = equirect_direction((c as f64 + 0.5) / width as f64, (r as f64 + 0.5) / height as f64);
            lobes.iter().fold(Rgb::ZERO, |acc, g| acc + g.eval_at(d))
        })
    }
}

pub fn eval_envmap(env: &EnvironmentMap, dir: Vec3) -> Rgb {
    env.eval(dir)
}

pub fn total_energy(env: &EnvironmentMap) -> f64 {
    env.total_energy()
}

/// Direction for equirect coordinates `u, v` in `[0, 1]`: longitude
/// `2πu`, colatitude `πv` measured from +Y.
pub fn equirect_direction(u: f64, v: f64) -> Vec3 {
    let theta = 2.0 * PI * u;
    let phi = PI * v;
    Vec3::new(phi.sin() * theta.cos(), phi.cos(), phi.sin() * theta.sin())
}

/// `n` points spread over the unit sphere on a golden-angle spiral.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let a = golden * i as f64;
            Vec3::new(r * a.cos(), r * a.sin(), z)
        })
        .collect()
}

fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> impl Fn(Vec3) -> Vec3 {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let [w, x, y, z] = q.map(|v| v / n);
    move |v: Vec3| {
        let u = Vec3::new(x, y, z);
        let t = u.cross(v) * 2.0;
        v + t * w + u.cross(t)
    }
}

/// Fibonacci axes under a random rotation, shared sharpness `K/2` and gray
/// amplitudes summing to `total_energy`.
pub fn init_envmap<R: Rng + ?Sized>(
    k: usize,
    total_energy: f64,
    rng: &mut R,
) -> Result<EnvironmentMap, LightingError> {
    if k == 0 {
        return Err(LightingError::NoLobes);
    }
    let rotate = random_rotation(rng);
    let sharpness = k as f64 / 2.0;
    let amp = total_energy / (k as f64 * sphere_integral_factor(sharpness));
    let lobes: Vec<_> = fibonacci_sphere(k)
        .into_iter()
        .map(|a| SphericalGaussian::new(rotate(a), sharpness, Rgb::splat(amp)))
        .collect();
    EnvironmentMap::from_lobes(&lobes)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub steps: usize,
    pub learning_rate: f64,
    /// Images wider than this are box-downsampled before fitting.
    pub max_width: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            steps: 1500,
            learning_rate: 0.1,
            max_width: 128,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub env: EnvironmentMap,
    /// Solid-angle weighted RMSE over pixels and channels.
    pub rmse: f64,
    /// `rmse` divided by the weighted RMS of the image.
    pub relative_rmse: f64,
}

struct Samples {
    dirs: Vec<Vec3>,
    targets: Vec<Rgb>,
    weights: Vec<f64>,
}

impl Samples {
    fn from_image(img: &Image) -> Self {
        let (w, h) = (img.width(), img.height());
        let mut s = Samples {
            dirs: Vec::with_capacity(w * h),
            targets: Vec::with_capacity(w * h),
            weights: Vec::with_capacity(w * h),
        };
        let cell = (2.0 * PI / w as f64) * (PI / h as f64);
        for r in 0..h {
            let v = (r as f64 + 0.5) / h as f64;
            let weight = (PI * v).sin() * cell;
            for c in 0..w {
                s.dirs.push(equirect_direction((c as f64 + 0.5) / w as f64, v));
                s.targets.push(img.get(r, c));
                s.weights.push(weight);
            }
        }
        s
    }

    /// Weighted mean squared error over channels, with its gradient with
    /// respect to the raw parameters when `grad` is given.
    fn loss(&self, env: &EnvironmentMap, mut grad: Option<&mut [f64]>) -> f64 {
        let lobes = env.lobes();
        let wsum: f64 = self.weights.iter().sum::<f64>() * 3.0;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut per_lobe = vec![(Rgb::ZERO, 0.0, Vec3::ZERO); lobes.len()];
        let mut loss = 0.0;
        let mut vals = vec![0.0; lobes.len()];
        for i in 0..self.dirs.len() {
            let d = self.dirs[i];
            let mut pred = Rgb::ZERO;
            for (k, g) in lobes.iter().enumerate() {
                vals[k] = (g.sharpness * (g.axis.dot(d) - 1.0)).exp();
                pred = pred + g.amplitude * vals[k];
            }
            let diff = pred - self.targets[i];
            loss += self.weights[i] * diff.dot(diff);
            if grad.is_some() {
                let r = diff * (2.0 * self.weights[i] / wsum);
                for (k, g) in lobes.iter().enumerate() {
                    let e = vals[k];
                    let ra = r.dot(g.amplitude) * e;
                    let acc = &mut per_lobe[k];
                    acc.0 = acc.0 + r * e;
                    acc.1 += ra * (g.axis.dot(d) - 1.0);
                    acc.2 = acc.2 + d * (ra * g.sharpness);
                }
            }
        }
        if let Some(g) = grad {
            let mut d_decoded = vec![0.0; env.raw.len()];
            for (k, (d_amp, d_sharp, d_axis)) in per_lobe.iter().enumerate() {
                let o = &mut d_decoded[k * PARAMS_PER_LOBE..(k + 1) * PARAMS_PER_LOBE];
                o[..3].copy_from_slice(&d_axis.to_array());
                o[3] = *d_sharp;
                o[4..].copy_from_slice(&d_amp.to_array());
            }
            g.copy_from_slice(&env.backprop_decoded(&d_decoded));
        }
        loss / wsum
    }
}

/// Fits `k` lobes to a latitude-longitude image by minimizing the
/// solid-angle weighted squared error with Adam.
pub fn fit_envmap_from_image<R: Rng + ?Sized>(
    image: &Image,
    k: usize,
    options: &FitOptions,
    rng: &mut R,
) -> Result<FitReport, LightingError> {
    if k == 0 {
        return Err(LightingError::NoLobes);
    }
    if !image.is_finite() {
        return Err(LightingError::NonFinite);
    }
    let factor = image.width().div_ceil(options.max_width.max(1)).max(1);
    let img = if factor > 1 { image.downsample(factor) } else { image.clone() };
    let samples = Samples::from_image(&img);
    let energy: f64 = samples
        .targets
        .iter()
        .zip(&samples.weights)
        .map(|(t, w)| t.sum() / 3.0 * w)
        .sum();
    let mut env = init_envmap(k, energy.max(1e-6), rng)?;
    let mut adam = AdamW::new(
        AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        },
        env.raw.len(),
    );
    let mut grad = vec![0.0; env.raw.len()];
    let mut best = (f64::INFINITY, env.clone());
    for step in 0..options.steps {
        let loss = samples.loss(&env, Some(&mut grad));
        if loss < best.0 {
            best = (loss, env.clone());
        }
        let lr = options.learning_rate * 0.5f64.powf(step as f64 / options.steps.max(1) as f64 * 3.0);
        adam.step(&mut env.raw, &grad, lr);
        env.renormalize_axes();
    }
    let last = samples.loss(&env, None);
    if last < best.0 {
        best = (last, env);
    }
    let (mse, env) = best;
    let wsum: f64 = samples.weights.iter().sum::<f64>() * 3.0;
    let signal: f64 = samples
        .targets
        .iter()
        .zip(&samples.weights)
        .map(|(t, w)| w * t.dot(*t))
        .sum::<f64>()
        / wsum;
    let rmse = mse.sqrt();
    Ok(FitReport {
        env,
        rmse,
        relative_rmse: rmse / signal.sqrt().max(1e-12),
    })
}
