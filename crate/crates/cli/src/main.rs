use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use sgstyle_core::appearance::Symmetry;
use sgstyle_core::diff::Vec3;
use sgstyle_core::geometry::{load_mesh, primitives, Camera, GeometryError, Scene, TriangleMesh};
use sgstyle_core::imageio::{read_image, write_pfm, write_png, Image, ImageError};
use sgstyle_core::lighting::{fit_envmap_from_image, EnvironmentMap, FitOptions, LightingError};
use sgstyle_core::optimization::{
    check_gradients, train_with, write_log_csv, GradCheckConfig, LossError, Objective, RemoteClient,
    RemoteEmbeddingLoss, TargetView, TrainConfig, TrainError,
};
use sgstyle_core::renderer::{
    edit_material, export_components, relight, render_view, Background, MaterialEdit, Override, RenderError,
    RenderOptions,
};
use sgstyle_core::style::{CheckpointError, Style};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERIC: u8 = 4;
const EXIT_REMOTE: u8 = 5;

#[derive(Debug)]
struct Failure {
    code: u8,
    class: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            class: "usage",
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            class: "io",
            message: message.into(),
        }
    }

    fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NUMERIC,
            class: "numeric",
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::io(e.to_string())
    }
}

impl From<ImageError> for Failure {
    fn from(e: ImageError) -> Self {
        match e {
            ImageError::NonFinite => Failure::numeric(e.to_string()),
            _ => Failure::io(e.to_string()),
        }
    }
}

impl From<GeometryError> for Failure {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::InvalidCamera(_) => Failure::usage(e.to_string()),
            _ => Failure::io(e.to_string()),
        }
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        Failure::io(e.to_string())
    }
}

impl From<LightingError> for Failure {
    fn from(e: LightingError) -> Self {
        match e {
            LightingError::NonFinite => Failure::numeric(e.to_string()),
            LightingError::Parse { .. } => Failure::io(e.to_string()),
            _ => Failure::usage(e.to_string()),
        }
    }
}

impl From<RenderError> for Failure {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Image(i) => i.into(),
            other => Failure::usage(other.to_string()),
        }
    }
}

impl From<LossError> for Failure {
    fn from(e: LossError) -> Self {
        match e {
            LossError::Remote(_) => Failure {
                code: EXIT_REMOTE,
                class: "remote",
                message: e.to_string(),
            },
            LossError::NonFinite | LossError::ZeroNorm => Failure::numeric(e.to_string()),
            _ => Failure::usage(e.to_string()),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Loss(l) => l.into(),
            TrainError::Geometry(g) => g.into(),
            TrainError::Diverged { .. } => Failure::numeric(e.to_string()),
            TrainError::Snapshot(m) => Failure::io(m),
            TrainError::Config(m) => Failure::usage(m),
        }
    }
}

/// Appearance stylization of fixed meshes with spherical-Gaussian shading.
#[derive(Parser, Debug)]
#[command(name = "sgstyle", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Shared {
    /// OBJ or PLY mesh; normalized to the unit sphere on load.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Style checkpoint to read (or, for stylize, to write).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// TOML training/render config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
struct Ablations {
    /// Diffuse-only shading (no specular or roughness).
    #[arg(long)]
    no_specular: bool,
    /// Keep face normals; no normal-offset network.
    #[arg(long)]
    no_normal_net: bool,
    /// Disable positional encoding for both networks.
    #[arg(long)]
    no_pe: bool,
    #[arg(long)]
    no_normal_pe: bool,
    #[arg(long)]
    no_brdf_pe: bool,
    /// Score only the full render of each view.
    #[arg(long)]
    no_crop: bool,
    /// Mirror SVBRDF queries across this axis: x, y or z.
    #[arg(long)]
    symmetry: Option<Symmetry>,
}

#[derive(Args, Debug, Clone, Default)]
struct ViewArgs {
    /// Number of orbit views.
    #[arg(long, default_value_t = 4)]
    views: usize,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// white or black.
    #[arg(long, default_value = "white")]
    background: Background,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize a style for a mesh against a prompt or target images.
    Stylize {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        ablations: Ablations,
        #[arg(long)]
        prompt: Option<String>,
        /// remote or image.
        #[arg(long, default_value = "remote")]
        loss: LossKind,
        /// Base URL of the embedding-loss service.
        #[arg(long)]
        endpoint: Option<String>,
        /// Directory with cameras.toml and target images.
        #[arg(long)]
        targets: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        lobes: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        snapshot_every: Option<usize>,
    },
    /// Render orbit views of a stylized mesh.
    Render {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        view: ViewArgs,
    },
    /// Render with a different environment (SG text file or fitted HDR image).
    Relight {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        view: ViewArgs,
        /// Lobe list, one `mx my mz lambda r g b` per line.
        #[arg(long, conflicts_with = "hdr")]
        env: Option<PathBuf>,
        /// Equirectangular HDR/PFM image to fit first.
        #[arg(long)]
        hdr: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        lobes: usize,
    },
    /// Sweep roughness and specular overrides into a grid image.
    EditMaterial {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        view: ViewArgs,
        /// Comma-separated roughness values (rows).
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,0.9")]
        roughness: Vec<f64>,
        /// Comma-separated specular values (columns).
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,0.9")]
        specular: Vec<f64>,
        /// Treat values as multipliers instead of replacements.
        #[arg(long)]
        scale: bool,
    },
    /// Fit an SG environment to an equirectangular image.
    FitEnv {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        hdr: PathBuf,
        #[arg(long, default_value_t = 32)]
        lobes: usize,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Write render, normal, diffuse, roughness, specular, envmap and mask images.
    ExportComponents {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        view: ViewArgs,
    },
    /// Compare analytic and finite-difference gradients per parameter class.
    CheckGradients {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, default_value_t = 8)]
        size: usize,
        #[arg(long, default_value_t = 16)]
        samples: usize,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        /// Central-difference step.
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum LossKind {
    Remote,
    Image,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.class, f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(shared: &Shared) -> Result<TrainConfig, Failure> {
    let mut cfg = match &shared.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::io(format!("{}: {e}", p.display())))?;
            TrainConfig::from_toml(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(seed) = shared.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_scene(shared: &Shared) -> Result<Scene, Failure> {
    let path = shared.mesh.as_ref().ok_or_else(|| Failure::usage("--mesh is required"))?;
    let loaded = load_mesh(path)?;
    if loaded.dropped_faces > 0 {
        log::warn!("dropped {} degenerate faces", loaded.dropped_faces);
    }
    Ok(Scene::new(loaded.mesh.normalized()))
}

fn load_style(shared: &Shared) -> Result<Style, Failure> {
    let path = shared
        .checkpoint
        .as_ref()
        .ok_or_else(|| Failure::usage("--checkpoint is required"))?;
    Ok(Style::load(path)?)
}

fn prepare_out(shared: &Shared, cfg: &TrainConfig) -> Result<(), Failure> {
    fs::create_dir_all(&shared.out)?;
    fs::write(shared.out.join("resolved_config.toml"), cfg.to_toml())?;
    Ok(())
}

/// `n` cameras orbiting the vertical axis, starting at the configured anchor.
fn orbit_cameras(cfg: &TrainConfig, view: &ViewArgs) -> Result<Vec<Camera>, Failure> {
    if view.views == 0 {
        return Err(Failure::usage("--views must be positive"));
    }
    let mut intr = cfg.camera.intrinsics();
    intr.width = view.width.unwrap_or(intr.width);
    intr.height = view.height.unwrap_or(intr.height);
    let [x, y, z] = cfg.camera.anchor;
    let a = Vec3::new(x, y, z).normalize() * cfg.camera.radius;
    (0..view.views)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / view.views as f64;
            let (s, c) = t.sin_cos();
            let p = Vec3::new(c * a.x + s * a.z, a.y, -s * a.x + c * a.z);
            Ok(Camera::new(p, intr)?)
        })
        .collect()
}

fn write_views(dir: &Path, stem: &str, images: &[Image]) -> Result<(), Failure> {
    for (i, img) in images.iter().enumerate() {
        write_png(dir.join(format!("{stem}_{i:02}.png")), img)?;
    }
    Ok(())
}

fn apply_ablations(cfg: &mut TrainConfig, a: &Ablations) {
    let app = &mut cfg.style.appearance;
    if a.no_specular {
        app.specular = false;
    }
    if a.no_normal_net {
        app.normal_net = false;
    }
    if a.no_pe || a.no_normal_pe {
        app.normal_encoding.enabled = false;
    }
    if a.no_pe || a.no_brdf_pe {
        app.brdf_encoding.enabled = false;
    }
    if a.no_crop {
        cfg.crop = false;
    }
    if let Some(s) = a.symmetry {
        app.symmetry = s;
    }
}

#[derive(Deserialize)]
struct TargetManifest {
    #[serde(default)]
    background: Option<Background>,
    #[serde(default)]
    fov_y_degrees: Option<f64>,
    view: Vec<TargetEntry>,
}

#[derive(Deserialize)]
struct TargetEntry {
    image: PathBuf,
    position: [f64; 3],
}

fn load_targets(dir: &Path, cfg: &TrainConfig) -> Result<(Vec<TargetView>, Background), Failure> {
    let manifest_path = dir.join("cameras.toml");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Failure::io(format!("{}: {e}", manifest_path.display())))?;
    let manifest: TargetManifest =
        toml::from_str(&text).map_err(|e| Failure::io(format!("{}: {e}", manifest_path.display())))?;
    let mut views = Vec::with_capacity(manifest.view.len());
    for entry in manifest.view {
        let image = read_image(dir.join(&entry.image))?;
        let mut intr = cfg.camera.intrinsics();
        intr.width = image.width();
        intr.height = image.height();
        intr.fov_y_degrees = manifest.fov_y_degrees.unwrap_or(intr.fov_y_degrees);
        let [x, y, z] = entry.position;
        let camera = Camera::new(Vec3::new(x, y, z), intr)?;
        views.push(TargetView { camera, image });
    }
    if views.is_empty() {
        return Err(Failure::usage("cameras.toml lists no views"));
    }
    Ok((views, manifest.background.unwrap_or(Background::Black)))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Stylize {
            shared,
            ablations,
            prompt,
            loss,
            endpoint,
            targets,
            iterations,
            lobes,
            width,
            height,
            learning_rate,
            snapshot_every,
        } => {
            let mut cfg = load_config(&shared)?;
            apply_ablations(&mut cfg, &ablations);
            if let Some(v) = iterations {
                cfg.iterations = v;
            }
            if let Some(v) = lobes {
                cfg.style.lobes = v;
            }
            if let Some(v) = width {
                cfg.camera.width = v;
            }
            if let Some(v) = height {
                cfg.camera.height = v;
            }
            if let Some(v) = learning_rate {
                cfg.learning_rate = v;
            }
            if let Some(v) = snapshot_every {
                cfg.snapshot_every = v;
            }
            cfg.validate()?;
            let scene = load_scene(&shared)?;
            prepare_out(&shared, &cfg)?;
            let style = Style::new(&cfg.style, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
            let snap_dir = shared.out.join("snapshots");
            fs::create_dir_all(&snap_dir)?;
            let preview = cfg.camera.anchor_camera()?;
            let mut snapshot = |iter: usize, s: &Style| -> Result<(), TrainError> {
                let v = render_view(&scene, &preview, s, &RenderOptions::default());
                write_png(snap_dir.join(format!("iter_{iter:05}.png")), &v.image)
                    .map_err(|e| TrainError::Snapshot(e.to_string()))
            };
            let outcome = match loss {
                LossKind::Remote => {
                    let prompt = prompt.ok_or_else(|| Failure::usage("--prompt is required with --loss remote"))?;
                    let endpoint = endpoint.ok_or_else(|| Failure::usage("--endpoint is required with --loss remote"))?;
                    let mut provider = RemoteEmbeddingLoss {
                        client: RemoteClient::new(&endpoint),
                        prompt,
                    };
                    train_with(&scene, style, Objective::Provider(&mut provider), &cfg, &mut snapshot)?
                }
                LossKind::Image => {
                    let dir = targets.ok_or_else(|| Failure::usage("--targets is required with --loss image"))?;
                    let (views, background) = load_targets(&dir, &cfg)?;
                    train_with(
                        &scene,
                        style,
                        Objective::Targets {
                            views: &views,
                            background,
                        },
                        &cfg,
                        &mut snapshot,
                    )?
                }
            };
            let ckpt = shared
                .checkpoint
                .clone()
                .unwrap_or_else(|| shared.out.join("checkpoint.bin"));
            outcome.style.save(&ckpt)?;
            write_log_csv(&outcome.log, fs::File::create(shared.out.join("train_log.csv"))?)?;
            fs::write(shared.out.join("env.txt"), outcome.style.env.to_text())?;
            info!("wrote {}", ckpt.display());
        }
        Command::Render { shared, view } => {
            let cfg = load_config(&shared)?;
            let scene = load_scene(&shared)?;
            let style = load_style(&shared)?;
            prepare_out(&shared, &cfg)?;
            let options = RenderOptions {
                background: view.background,
                ..Default::default()
            };
            let images: Vec<Image> = orbit_cameras(&cfg, &view)?
                .iter()
                .map(|c| render_view(&scene, c, &style, &options).image)
                .collect();
            write_views(&shared.out, "render", &images)?;
        }
        Command::Relight {
            shared,
            view,
            env,
            hdr,
            lobes,
        } => {
            let cfg = load_config(&shared)?;
            let scene = load_scene(&shared)?;
            let style = load_style(&shared)?;
            prepare_out(&shared, &cfg)?;
            let env = match (env, hdr) {
                (Some(p), _) => {
                    let text = fs::read_to_string(&p).map_err(|e| Failure::io(format!("{}: {e}", p.display())))?;
                    EnvironmentMap::from_text(&text)?
                }
                (None, Some(p)) => {
                    let img = read_image(&p)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    fit_envmap_from_image(&img, lobes, &FitOptions::default(), &mut rng)?.env
                }
                (None, None) => return Err(Failure::usage("one of --env or --hdr is required")),
            };
            let options = RenderOptions {
                background: view.background,
                ..Default::default()
            };
            let cams = orbit_cameras(&cfg, &view)?;
            let images: Vec<Image> = relight(&scene, &style, &env, &cams, &options)
                .into_iter()
                .map(|v| v.image)
                .collect();
            write_views(&shared.out, "relight", &images)?;
            write_png(shared.out.join("relight_envmap.png"), &env.rasterize(256, 128))?;
        }
        Command::EditMaterial {
            shared,
            view,
            roughness,
            specular,
            scale,
        } => {
            let cfg = load_config(&shared)?;
            let scene = load_scene(&shared)?;
            let style = load_style(&shared)?;
            prepare_out(&shared, &cfg)?;
            let camera = orbit_cameras(&cfg, &view)?[0];
            let wrap = |v: f64| if scale { Override::Scale(v) } else { Override::Set(v) };
            let base = RenderOptions {
                background: view.background,
                ..Default::default()
            };
            let mut tiles = Vec::with_capacity(roughness.len() * specular.len());
            for &r in &roughness {
                for &s in &specular {
                    let options = edit_material(
                        &base,
                        MaterialEdit {
                            roughness: Some(wrap(r)),
                            specular: Some(wrap(s)),
                        },
                    )?;
                    tiles.push(render_view(&scene, &camera, &style, &options).image);
                }
            }
            write_png(shared.out.join("edit_grid.png"), &Image::grid(&tiles, specular.len().max(1)))?;
        }
        Command::FitEnv {
            shared,
            hdr,
            lobes,
            steps,
        } => {
            let cfg = load_config(&shared)?;
            prepare_out(&shared, &cfg)?;
            let img = read_image(&hdr)?;
            let mut options = FitOptions::default();
            if let Some(s) = steps {
                options.steps = s;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let report = fit_envmap_from_image(&img, lobes, &options, &mut rng)?;
            info!("fit rmse {:.5} (relative {:.4})", report.rmse, report.relative_rmse);
            fs::write(shared.out.join("env.txt"), report.env.to_text())?;
            let preview = report.env.rasterize(img.width().min(512), img.height().min(256));
            write_png(shared.out.join("env_preview.png"), &preview)?;
            write_pfm(shared.out.join("env_preview.pfm"), &preview)?;
        }
        Command::ExportComponents { shared, view } => {
            let cfg = load_config(&shared)?;
            let scene = load_scene(&shared)?;
            let style = load_style(&shared)?;
            prepare_out(&shared, &cfg)?;
            let stem = shared
                .mesh
                .as_ref()
                .and_then(|p| p.file_stem())
                .and_then(|s| s.to_str())
                .unwrap_or("mesh")
                .to_string();
            let options = RenderOptions {
                background: view.background,
                ..Default::default()
            };
            for (i, cam) in orbit_cameras(&cfg, &view)?.iter().enumerate() {
                let stem = if view.views == 1 { stem.clone() } else { format!("{stem}{i:02}") };
                export_components(&scene, cam, &style, &options).write(&shared.out, &stem)?;
            }
        }
        Command::CheckGradients {
            shared,
            size,
            samples,
            tolerance,
            step,
        } => {
            let cfg = load_config(&shared)?;
            prepare_out(&shared, &cfg)?;
            let mesh: TriangleMesh = match &shared.mesh {
                Some(_) => load_scene(&shared)?.mesh().clone(),
                None => primitives::icosphere(0),
            };
            let scene = Scene::new(mesh);
            let style = match &shared.checkpoint {
                Some(_) => load_style(&shared)?,
                None => Style::new(&cfg.style, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?,
            };
            let mut intr = cfg.camera.intrinsics();
            intr.width = size;
            intr.height = size;
            let [x, y, z] = cfg.camera.anchor;
            let camera = Camera::new(Vec3::new(x + 0.3, y + 0.2, z).normalize() * cfg.camera.radius, intr)?;
            let check = GradCheckConfig {
                step,
                samples_per_class: samples,
                tolerance,
                ..Default::default()
            };
            let reports = check_gradients(&scene, &camera, &style, &RenderOptions::default(), &check);
            let mut failed = 0;
            for r in &reports {
                println!(
                    "{:<18} {:>4} checked  max rel err {:.3e}  {}",
                    r.name,
                    r.checked,
                    r.max_rel_error,
                    if r.passed { "PASS" } else { "FAIL" }
                );
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                return Err(Failure::numeric(format!("{failed} parameter classes failed")));
            }
        }
    }
    Ok(())
}
