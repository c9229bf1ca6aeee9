use std::io::Write;
use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::adam::{AdamConfig, AdamW};
use super::augment::{crop_augment, resample, resample_backward, CropWindow, CROP_SIZE};
use super::loss::{image_target_loss, LossError, LossProvider};
use crate::diff::{Rgb, Vec3};
use crate::geometry::{sample_cameras, Camera, GeometryError, Intrinsics, Scene};
use crate::imageio::Image;
use crate::renderer::{backward_view, render_view_traced, Background, RenderOptions};
use crate::style::{Style, StyleConfig};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("loss diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("snapshot failed: {0}")]
    Snapshot(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundPolicy {
    /// White and black on alternating iterations, phase set by the seed.
    #[default]
    Alternate,
    White,
    Black,
}

impl BackgroundPolicy {
    pub fn at(self, iteration: usize, seed: u64) -> Background {
        match self {
            BackgroundPolicy::White => Background::White,
            BackgroundPolicy::Black => Background::Black,
            BackgroundPolicy::Alternate => {
                if (iteration as u64).wrapping_add(seed) % 2 == 0 {
                    Background::White
                } else {
                    Background::Black
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub anchor: [f64; 3],
    pub radius: f64,
    pub sigma: f64,
    pub fov_y_degrees: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            anchor: [0.0, 0.0, 1.0],
            radius: 2.0,
            sigma: 0.3,
            fov_y_degrees: 45.0,
            width: CROP_SIZE,
            height: CROP_SIZE,
        }
    }
}

impl CameraConfig {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fov_y_degrees: self.fov_y_degrees,
            width: self.width,
            height: self.height,
        }
    }

    pub fn anchor_camera(&self) -> Result<Camera, GeometryError> {
        let [x, y, z] = self.anchor;
        Camera::new(Vec3::new(x, y, z).normalize() * self.radius, self.intrinsics())
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Camera>, GeometryError> {
        let [x, y, z] = self.anchor;
        sample_cameras(Vec3::new(x, y, z), self.radius, self.sigma, n, self.intrinsics(), rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub views_per_iter: usize,
    pub crops_per_view: usize,
    pub crop_scale: [f64; 2],
    /// When false only the resized full render of each view is scored.
    pub crop: bool,
    pub learning_rate: f64,
    pub decay: f64,
    pub decay_every: usize,
    pub weight_decay: f64,
    pub background: BackgroundPolicy,
    pub seed: u64,
    /// Observer calls every this many iterations; 0 disables them.
    pub snapshot_every: usize,
    pub camera: CameraConfig,
    pub style: StyleConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1500,
            views_per_iter: 5,
            crops_per_view: 4,
            crop_scale: [0.5, 0.99],
            crop: true,
            learning_rate: 5e-4,
            decay: 0.7,
            decay_every: 500,
            weight_decay: 1e-2,
            background: BackgroundPolicy::Alternate,
            seed: 0,
            snapshot_every: 100,
            camera: CameraConfig::default(),
            style: StyleConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let [lo, hi] = self.crop_scale;
        let bad = |m: String| Err(TrainError::Config(m));
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad(format!("crop_scale [{lo}, {hi}] must satisfy 0 < lo <= hi <= 1"));
        }
        if self.views_per_iter == 0 || (self.crop && self.crops_per_view == 0) {
            return bad("views_per_iter and crops_per_view must be positive".into());
        }
        if self.decay_every == 0 {
            return bad("decay_every must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay {} must lie in (0, 1]", self.decay));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if self.style.lobes == 0 {
            return bad("style.lobes must be positive".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        lr_at(self.learning_rate, self.decay, self.decay_every, iteration)
    }
}

/// Step schedule `base * decay^floor(t / every)`.
pub fn lr_at(base: f64, decay: f64, every: usize, t: usize) -> f64 {
    base * decay.powi((t / every) as i32)
}

/// A fixed camera and the image it should reproduce.
#[derive(Clone, Debug)]
pub struct TargetView {
    pub camera: Camera,
    pub image: Image,
}

pub enum Objective<'a> {
    /// Scores the resized full render plus random crops of sampled views.
    Provider(&'a mut dyn LossProvider),
    /// Mean squared error against fixed views rendered over `background`.
    Targets {
        views: &'a [TargetView],
        background: Background,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub loss: f64,
    pub lr: f64,
    pub seconds: f64,
}

pub fn write_log_csv<W: Write>(rows: &[LogRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iter,loss,lr,seconds")?;
    for r in rows {
        writeln!(out, "{},{},{},{:.3}", r.iter, r.loss, r.lr, r.seconds)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub style: Style,
    pub log: Vec<LogRow>,
}

/// One rendered view of a batch and the square windows scored from it.
/// `None` scores the render as is.
#[derive(Clone, Debug)]
pub struct ViewPlan {
    pub camera: Camera,
    pub windows: Option<Vec<CropWindow>>,
}

/// Loss of `style` over `plans` and its gradient in the flat style layout.
/// Windows are resampled to `CROP_SIZE` before scoring.
pub fn batch_gradient(
    scene: &Scene,
    style: &Style,
    options: &RenderOptions,
    plans: &[ViewPlan],
    provider: &mut dyn LossProvider,
) -> Result<(f64, Vec<f64>), LossError> {
    let traced: Vec<_> = plans
        .iter()
        .map(|p| render_view_traced(scene, &p.camera, style, options))
        .collect();
    let mut images = Vec::new();
    for (p, t) in plans.iter().zip(&traced) {
        match &p.windows {
            None => images.push(t.view.image.clone()),
            Some(ws) => images.extend(ws.iter().map(|w| resample(&t.view.image, *w, CROP_SIZE))),
        }
    }
    let out = provider.evaluate(&images)?;
    if out.grads.len() != images.len() {
        return Err(LossError::Shape(format!(
            "{} gradients for {} images",
            out.grads.len(),
            images.len()
        )));
    }
    let mut grad = vec![0.0; style.param_count()];
    let mut g = out.grads.iter();
    for (p, t) in plans.iter().zip(&traced) {
        let img = &t.view.image;
        let d_image = match &p.windows {
            None => g.next().expect("counted above").clone(),
            Some(ws) => {
                let mut d = Image::new(img.width(), img.height(), Rgb::ZERO);
                for w in ws {
                    resample_backward(g.next().expect("counted above"), *w, &mut d);
                }
                d
            }
        };
        if (d_image.width(), d_image.height()) != (img.width(), img.height()) {
            return Err(LossError::Shape("gradient image size differs from render".into()));
        }
        backward_view(t, style, options, &d_image, &mut grad);
    }
    Ok((out.loss, grad))
}

struct Targets<'a> {
    images: Vec<&'a Image>,
}

impl LossProvider for Targets<'_> {
    fn evaluate(&mut self, images: &[Image]) -> Result<super::LossOutput, LossError> {
        image_target_loss(images, &self.images)
    }
}

pub fn train(
    scene: &Scene,
    style: Style,
    objective: Objective<'_>,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_with(scene, style, objective, config, &mut |_, _| Ok(()))
}

/// Like [`train`], calling `observer(iteration, style)` after every
/// `snapshot_every`-th update.
pub fn train_with(
    scene: &Scene,
    mut style: Style,
    mut objective: Objective<'_>,
    config: &TrainConfig,
    observer: &mut dyn FnMut(usize, &Style) -> Result<(), TrainError>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if let Objective::Targets { views, .. } = &objective {
        if views.is_empty() {
            return Err(TrainError::Config("no target views".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = style.params();
    let mut adam = AdamW::new(
        AdamConfig {
            weight_decay: config.weight_decay,
            ..Default::default()
        },
        params.len(),
    );
    let start = Instant::now();
    let mut log = Vec::with_capacity(config.iterations);
    let (lo, hi) = (config.crop_scale[0], config.crop_scale[1]);
    for iter in 0..config.iterations {
        let lr = config.learning_rate_at(iter);
        let (loss, grad) = match &mut objective {
            Objective::Provider(provider) => {
                let options = RenderOptions {
                    background: config.background.at(iter, config.seed),
                    ..Default::default()
                };
                let cameras = config.camera.sample(config.views_per_iter, &mut rng)?;
                let mut plans = Vec::with_capacity(cameras.len());
                for camera in cameras {
                    let blank = Image::new(camera.width, camera.height, Rgb::ZERO);
                    let mut windows = vec![CropWindow::full(&blank)];
                    if config.crop {
                        let crops = crop_augment(&blank, config.crops_per_view, (lo, hi), &mut rng)?;
                        windows.extend(crops.iter().map(|c| c.window));
                    }
                    plans.push(ViewPlan {
                        camera,
                        windows: Some(windows),
                    });
                }
                batch_gradient(scene, &style, &options, &plans, &mut **provider)?
            }
            Objective::Targets { views, background } => {
                let n = views.len();
                let picked: Vec<&TargetView> = (0..config.views_per_iter.min(n))
                    .map(|j| &views[(iter * config.views_per_iter + j) % n])
                    .collect();
                let plans: Vec<ViewPlan> = picked
                    .iter()
                    .map(|v| ViewPlan {
                        camera: v.camera,
                        windows: None,
                    })
                    .collect();
                let mut targets = Targets {
                    images: picked.iter().map(|v| &v.image).collect(),
                };
                let options = RenderOptions {
                    background: *background,
                    ..Default::default()
                };
                batch_gradient(scene, &style, &options, &plans, &mut targets)?
            }
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::Diverged { iteration: iter });
        }
        adam.step(&mut params, &grad, lr);
        if params.iter().any(|p| p.is_nan()) {
            return Err(TrainError::Diverged { iteration: iter });
        }
        style.set_params(&params);
        let row = LogRow {
            iter,
            loss,
            lr,
            seconds: start.elapsed().as_secs_f64(),
        };
        if iter % 50 == 0 {
            info!("iter {iter} loss {loss:.6} lr {lr:.2e}");
        }
        log.push(row);
        if config.snapshot_every > 0 && (iter + 1) % config.snapshot_every == 0 {
            observer(iter + 1, &style)?;
        }
    }
    Ok(TrainOutcome { style, log })
}
