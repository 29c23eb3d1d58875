//! Command-line front end: `render`, `fit`, `benchmark` and `convert`.
//!
//! [`run`] parses arguments, executes the command and returns the process
//! exit code: 0 on success, 1 when optimization diverges, 2 for usage,
//! configuration and I/O errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{Camera, Projection};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grad::{render_backward, BackwardOptions};
use crate::imaging::{read_png, write_png, BitDepth, FeatureImage};
use crate::optim::{Checkpoint, Fitter, Observation, OptimizerState};
use crate::parallel::with_workers;
use crate::raster::{render_forward_with, Precision, RenderOptions, RenderStats};
use crate::scene::{import_point_cloud, load_scene, save_scene, PointCloudImport, SphereScene};
use crate::shade::{DirectionalLight, Shading};
use crate::synth;
use crate::testkit::oracle_render;

#[derive(Debug, Parser)]
#[command(name = "softsphere", version, about = "Differentiable sphere renderer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scene file to PNG.
    Render(RenderArgs),
    /// Fit a sphere scene to posed images.
    Fit(Box<FitArgs>),
    /// Time forward and backward passes on synthetic scenes.
    Benchmark(BenchmarkArgs),
    /// Convert an ASCII PLY point cloud to a PSC1 scene file.
    Convert(ConvertArgs),
}

/// Options shared by the rendering commands. Flags override the config file.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Far plane.
    #[arg(long)]
    pub max_depth: Option<f64>,
    /// Near plane.
    #[arg(long)]
    pub min_depth: Option<f64>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_parser = ["32", "64"])]
    pub precision: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct CameraArgs {
    /// Camera vector "tx ty tz r1 r2 r3 f s" (axis-angle) or with a 6D rotation (11 values).
    #[arg(long, allow_hyphen_values = true)]
    pub camera: Option<String>,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    #[arg(long)]
    pub orthographic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShaderKind {
    Identity,
    Diffuse,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// PSC1 scene file.
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    pub scene: Option<PathBuf>,
    /// Render N random spheres instead of a scene file.
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// 8 or 16 bits per channel.
    #[arg(long, default_value_t = 8, value_parser = parse_bit_depth)]
    pub bit_depth: u8,
    /// Comma-separated feature channels to write (1 or 3).
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub shader: Option<ShaderKind>,
    /// Directional light "dx,dy,dz,intensity,ambient" for the diffuse shader; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    pub light: Vec<String>,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub cam: CameraArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Directory of target PNGs, used in file-name order.
    #[arg(long)]
    pub images: PathBuf,
    /// Camera poses, one camera vector per line, matching the image order.
    #[arg(long)]
    pub cameras: PathBuf,
    /// Initial scene: scene:PATH, ply:PATH or volume:N.
    #[arg(long, required_unless_present = "resume")]
    pub init: Option<String>,
    /// Continue from a checkpoint written by an earlier fit; replaces --init.
    #[arg(long, conflicts_with = "init")]
    pub resume: Option<PathBuf>,
    /// Channels read from each PNG (1 or 3).
    #[arg(long, default_value_t = 3)]
    pub image_channels: usize,
    /// Output directory (checkpoint, loss CSV, previews).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr_position: Option<f64>,
    #[arg(long)]
    pub lr_radius: Option<f64>,
    #[arg(long)]
    pub lr_opacity: Option<f64>,
    #[arg(long)]
    pub lr_feature: Option<f64>,
    #[arg(long)]
    pub lr_camera: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub gamma_start: Option<f64>,
    #[arg(long)]
    pub gamma_end: Option<f64>,
    #[arg(long)]
    pub views_per_step: Option<usize>,
    #[arg(long)]
    pub lambda_od: Option<f64>,
    #[arg(long)]
    pub optimize_camera: bool,
    /// Disable position/radius gating of small spheres.
    #[arg(long)]
    pub no_gating: bool,
    #[arg(long)]
    pub prune_opacity: Option<f64>,
    #[arg(long)]
    pub prune_background: Option<f64>,
    /// Prune every N epochs (0 disables).
    #[arg(long)]
    pub prune_every: Option<usize>,
    #[arg(long)]
    pub prune_keep_invisible: bool,
    /// Steps after which every sphere is subdivided, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub subdivide_at: Option<Vec<usize>>,
    #[arg(long)]
    pub subdivide_scale: Option<f64>,
    #[arg(long)]
    pub preview_every: Option<usize>,
    /// Axis-depth range "near,far" for volume initialization.
    #[arg(long, value_delimiter = ',', default_value = "5,40")]
    pub volume_depth: Vec<f64>,
    /// Volume-initialized radius per unit of depth.
    #[arg(long, default_value_t = 0.005)]
    pub volume_radius: f64,
    /// Radius for point-cloud initialization.
    #[arg(long, default_value_t = 0.05)]
    pub init_radius: f64,
    #[arg(long, default_value_t = 0.5)]
    pub init_opacity: f64,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub orthographic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// Random spheres in front of the camera.
    Random,
    /// An opaque sphere in front of N hidden spheres.
    Occluded,
    /// N large spheres stacked along the view axis.
    Stacked,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_delimiter = ',', default_value = "1000,10000")]
    pub counts: Vec<usize>,
    #[arg(long, default_value_t = 256)]
    pub width: u32,
    #[arg(long, default_value_t = 256)]
    pub height: u32,
    #[arg(long, value_enum, default_value_t = Profile::Random)]
    pub profile: Profile,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Also time the brute-force oracle for counts up to this size.
    #[arg(long, default_value_t = 2000)]
    pub oracle_max: usize,
    /// CSV output file; stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub ply: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub radius: f64,
    #[arg(long, default_value_t = 1.0)]
    pub opacity: f64,
    /// Feature channels per sphere; colors fill the first three.
    #[arg(long, default_value_t = 3)]
    pub feature_dim: usize,
    /// Background feature, comma-separated; zeros when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub background: Option<Vec<f64>>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } => 1,
        _ => 2,
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Render(a) => cmd_render(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
        Command::Convert(a) => cmd_convert(&a),
    }
}

/// Parses a whitespace- or comma-separated list of numbers.
pub fn parse_numbers(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Config(format!("'{t}' is not a number")))
        })
        .collect()
}

fn apply_common(cfg: &mut RunConfig, a: &CommonArgs) {
    if let Some(v) = a.gamma {
        cfg.blend.gamma = v;
    }
    if let Some(v) = a.epsilon {
        cfg.blend.epsilon = v;
    }
    if let Some(v) = a.tau {
        cfg.blend.tau = v;
    }
    if let Some(v) = a.top_k {
        cfg.blend.top_k = v;
    }
    if let Some(v) = a.max_depth {
        cfg.camera.far = v;
    }
    if let Some(v) = a.min_depth {
        cfg.camera.near = v;
    }
    if let Some(v) = a.workers {
        cfg.workers = v;
    }
    if let Some(p) = &a.precision {
        cfg.precision = if p == "32" { Precision::F32 } else { Precision::F64 };
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
        cfg.fit.seed = v;
    }
}

fn base_config(a: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    apply_common(&mut cfg, a);
    Ok(cfg)
}

fn parse_bit_depth(s: &str) -> std::result::Result<u8, String> {
    match s {
        "8" => Ok(8),
        "16" => Ok(16),
        _ => Err(format!("bit depth must be 8 or 16, got '{s}'")),
    }
}

fn bit_depth(bits: u8) -> BitDepth {
    if bits == 16 {
        BitDepth::Sixteen
    } else {
        BitDepth::Eight
    }
}

fn parse_light(text: &str) -> Result<DirectionalLight> {
    let v = parse_numbers(text)?;
    if v.len() != 5 {
        return Err(Error::Config(format!(
            "light needs 'dx,dy,dz,intensity,ambient', got '{text}'"
        )));
    }
    DirectionalLight::new(Vector3::new(v[0], v[1], v[2]), v[3], v[4])
}

pub fn format_stats(stats: &RenderStats, seconds: f64) -> String {
    format!(
        "spheres {} | on sensor {} | sub-pixel {} | candidates tested {} | hits {} | early-stop ratio {:.3} | wall time {:.3} s",
        stats.spheres,
        stats.spheres_on_sensor,
        stats.subpixel_spheres,
        stats.candidates_tested,
        stats.hits_blended,
        stats.early_stop_ratio(),
        seconds
    )
}

fn cmd_render(a: &RenderArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    if let Some(t) = &a.cam.camera {
        cfg.camera.vector = parse_numbers(t)?;
    }
    if let Some(w) = a.cam.width {
        cfg.camera.width = w;
    }
    if let Some(h) = a.cam.height {
        cfg.camera.height = h;
    }
    if a.cam.orthographic {
        cfg.camera.projection = Projection::Orthographic;
    }
    cfg.validate()?;
    let camera = cfg.camera.camera()?;
    let scene = match (&a.scene, a.random) {
        (Some(p), _) => load_scene(p)?,
        (None, Some(n)) => synth::random_scene(n, cfg.seed),
        (None, None) => return Err(Error::Config("either --scene or --random is required".into())),
    };
    let shading = match a.shader {
        None => Shading::None,
        Some(ShaderKind::Identity) => Shading::Identity,
        Some(ShaderKind::Diffuse) => {
            let lights = if a.light.is_empty() {
                vec![DirectionalLight::new(Vector3::new(0.0, 0.0, 1.0), 0.8, 0.2)?]
            } else {
                a.light.iter().map(|l| parse_light(l)).collect::<Result<_>>()?
            };
            Shading::Diffuse { lights }
        }
    };
    let opts = RenderOptions {
        keep_buffer: false,
        precision: cfg.precision,
        ..RenderOptions::default()
    };
    let t0 = Instant::now();
    let (out, colors) = with_workers(cfg.workers, || -> Result<_> {
        let out = render_forward_with(&scene, &camera, &cfg.blend, &opts)?;
        let colors = shading.apply(&out.image, &camera)?;
        Ok((out, colors))
    })??;
    let seconds = t0.elapsed().as_secs_f64();
    let image = match &a.channels {
        Some(ch) => colors.select_channels(ch)?,
        None if matches!(colors.feature_dim(), 1 | 3) => colors,
        None => {
            return Err(Error::Config(format!(
                "scene has {} feature channels; pass --channels or --shader to produce 1 or 3",
                colors.feature_dim()
            )))
        }
    };
    write_png(&image, &a.out, bit_depth(a.bit_depth))?;
    println!("{}", format_stats(&out.stats, seconds));
    Ok(())
}

/// Reads one camera vector per non-empty, non-`#` line.
pub fn read_camera_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v = parse_numbers(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_camera_file(path: &Path, cameras: &[Camera]) -> Result<()> {
    let mut s = String::new();
    for c in cameras {
        let v: Vec<String> = c.to_vector().iter().map(|x| format!("{x:?}")).collect();
        s.push_str(&v.join(" "));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

fn initial_scene(a: &FitArgs, first: &Camera, feature_dim: usize, seed: u64) -> Result<SphereScene> {
    let init = a
        .init
        .as_deref()
        .ok_or_else(|| Error::Config("--init is required".into()))?;
    let (kind, arg) = init.split_once(':').unwrap_or_else(|| {
        if init.to_ascii_lowercase().ends_with(".ply") {
            ("ply", init)
        } else {
            ("scene", init)
        }
    });
    let scene = match kind {
        "scene" => load_scene(arg)?,
        "ply" => import_point_cloud(
            arg,
            &PointCloudImport {
                feature_dim,
                background: vec![0.0; feature_dim],
                radius: a.init_radius,
                opacity: a.init_opacity,
            },
        )?,
        "volume" => {
            let n: usize = arg
                .parse()
                .map_err(|_| Error::Config(format!("volume:N needs a sphere count, got '{arg}'")))?;
            if a.volume_depth.len() != 2 {
                return Err(Error::Config("--volume-depth takes 'near,far'".into()));
            }
            synth::fill_volume(
                first,
                n,
                a.volume_depth[0],
                a.volume_depth[1],
                a.volume_radius,
                feature_dim,
                seed,
            )?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown init kind '{other}' (scene, ply or volume)"
            )))
        }
    };
    if scene.feature_dim() != feature_dim {
        return Err(Error::Dimension(format!(
            "initial scene has {} feature channels, images have {feature_dim}",
            scene.feature_dim()
        )));
    }
    Ok(scene)
}

fn apply_fit_flags(cfg: &mut RunConfig, a: &FitArgs) {
    let f = &mut cfg.fit;
    let lr = &mut f.learning_rates;
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut lr.position, a.lr_position);
    set(&mut lr.radius, a.lr_radius);
    set(&mut lr.opacity, a.lr_opacity);
    set(&mut lr.feature, a.lr_feature);
    set(&mut lr.camera, a.lr_camera);
    set(&mut f.lr_decay, a.lr_decay);
    set(&mut f.gamma.start, a.gamma_start);
    set(&mut f.gamma.end, a.gamma_end);
    set(&mut f.lambda_od, a.lambda_od);
    set(&mut f.prune.opacity_min, a.prune_opacity);
    set(&mut f.prune.background_distance, a.prune_background);
    set(&mut f.subdivide.radius_scale, a.subdivide_scale);
    if let Some(v) = a.steps {
        f.steps = v;
    }
    if let Some(v) = a.views_per_step {
        f.views_per_step = v;
    }
    if let Some(v) = a.prune_every {
        f.prune.every_epochs = v;
    }
    if let Some(v) = &a.subdivide_at {
        f.subdivide.at_steps = v.clone();
    }
    if a.optimize_camera {
        f.optimize_camera = true;
    }
    if a.no_gating {
        f.gate_small_spheres = false;
    }
    if a.prune_keep_invisible {
        f.prune.remove_invisible = false;
    }
    if let Some(v) = a.preview_every {
        cfg.output.preview_every = v;
    }
    if let Some(d) = &a.out {
        cfg.output.dir = d.clone();
    }
    if a.common.epsilon.is_some() {
        f.epsilon = cfg.blend.epsilon;
    }
    if a.common.tau.is_some() {
        f.tau = cfg.blend.tau;
    }
    if a.common.top_k.is_some() {
        f.top_k = cfg.blend.top_k;
    }
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    apply_fit_flags(&mut cfg, a);
    if a.orthographic {
        cfg.camera.projection = Projection::Orthographic;
    }
    cfg.validate()?;
    if !matches!(a.image_channels, 1 | 3) {
        return Err(Error::Config("--image-channels must be 1 or 3".into()));
    }
    let files = png_files(&a.images)?;
    if files.is_empty() {
        return Err(Error::Config(format!("no PNG images in {}", a.images.display())));
    }
    let vectors = read_camera_file(&a.cameras)?;
    if vectors.len() != files.len() {
        return Err(Error::Config(format!(
            "{} camera poses for {} images",
            vectors.len(),
            files.len()
        )));
    }
    let mut observations = Vec::with_capacity(files.len());
    for (path, v) in files.iter().zip(&vectors) {
        let image = read_png(path, a.image_channels)?;
        let mut cam_cfg = cfg.camera.clone();
        cam_cfg.width = image.width();
        cam_cfg.height = image.height();
        cam_cfg.vector = v.clone();
        observations.push(Observation {
            camera: cam_cfg.camera()?,
            image,
        });
    }
    let (scene, resume) = match &a.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.cameras.len() != observations.len() {
                return Err(Error::Config(format!(
                    "checkpoint has {} cameras for {} images",
                    ck.cameras.len(),
                    observations.len()
                )));
            }
            for (o, c) in observations.iter_mut().zip(&ck.cameras) {
                o.camera = c.clone();
            }
            (ck.scene, Some((ck.optimizer, ck.step)))
        }
        None => (
            initial_scene(a, &observations[0].camera, a.image_channels, cfg.seed)?,
            None,
        ),
    };
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let t0 = Instant::now();
    let workers = cfg.workers;
    let result = with_workers(workers, || fit_loop(&cfg, scene, observations, resume, &dir))?;
    let (trace_csv, fitter) = result?;
    fs::write(dir.join("loss.csv"), trace_csv).map_err(|e| Error::io(dir.join("loss.csv"), e))?;
    let fitted = fitter.finish();
    save_scene(&fitted.scene, dir.join("scene.psc"))?;
    write_camera_file(&dir.join("cameras.txt"), &fitted.cameras)?;
    let last = fitted.trace.last().map_or(f64::NAN, |r| r.loss);
    println!(
        "fit {} steps | spheres {} | final loss {:.6} | wall time {:.3} s",
        fitted.trace.len(),
        fitted.scene.len(),
        last,
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}

fn fit_loop(
    cfg: &RunConfig,
    scene: SphereScene,
    observations: Vec<Observation>,
    resume: Option<(OptimizerState, usize)>,
    dir: &Path,
) -> Result<(String, Fitter)> {
    let mut fitter = Fitter::new(scene, observations, Shading::None, cfg.fit.clone())?;
    if let Some((state, step)) = resume {
        fitter.resume(state, step)?;
    }
    let mut csv = String::from("step,epoch,gamma,loss,photometric,spheres\n");
    let every = cfg.output.preview_every;
    let depth = bit_depth(cfg.output.bit_depth);
    let checkpoint = |f: &Fitter| -> Result<()> {
        Checkpoint {
            step: f.step_index(),
            scene: f.scene().clone(),
            cameras: f.cameras(),
            shading: f.shading().clone(),
            optimizer: f.state().clone(),
            config: f.config().clone(),
        }
        .save(dir.join("checkpoint.psck"))
    };
    while !fitter.is_done() {
        let r = match fitter.step() {
            Ok(r) => r,
            Err(e) => {
                // Keep the trace up to the failure for inspection.
                let _ = fs::write(dir.join("loss.csv"), &csv);
                return Err(e);
            }
        };
        let _ = writeln!(
            csv,
            "{},{},{:?},{:?},{:?},{}",
            r.step, r.epoch, r.gamma, r.loss, r.photometric, r.spheres
        );
        if every > 0 && (r.step + 1) % every == 0 {
            let img = fitter.render_view(0, r.gamma)?;
            write_png(&img, dir.join(format!("preview_{:06}.png", r.step + 1)), depth)?;
        }
    }
    checkpoint(&fitter)?;
    Ok((csv, fitter))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

fn benchmark_scene(profile: Profile, n: usize, camera: &Camera, seed: u64) -> SphereScene {
    match profile {
        Profile::Random => synth::random_scene(n, seed),
        Profile::Occluded => synth::occluded_scene(camera, n, seed),
        Profile::Stacked => synth::stacked_scene(camera, n, 3, seed),
    }
}

fn cmd_benchmark(a: &BenchmarkArgs) -> Result<()> {
    if a.repeats == 0 {
        return Err(Error::Config("--repeats must be at least 1".into()));
    }
    if a.counts.is_empty() {
        return Err(Error::Config("--counts needs at least one sphere count".into()));
    }
    let mut cfg = base_config(&a.common)?;
    cfg.camera.width = a.width;
    cfg.camera.height = a.height;
    cfg.validate()?;
    let camera = synth::quickstart_camera(a.width, a.height);
    let camera = Camera::from_vector(
        &camera.to_vector(),
        camera.sensor().with_depth_range(cfg.camera.near, cfg.camera.far),
    )?;
    let mut csv = String::from(
        "spheres,profile,width,height,repeats,forward_mean_ms,forward_std_ms,backward_mean_ms,backward_std_ms,\
         oracle_mean_ms,on_sensor,records_scanned,candidates_tested,hits_blended,early_stop_ratio\n",
    );
    let profile = format!("{:?}", a.profile).to_lowercase();
    with_workers(cfg.workers, || -> Result<()> {
        for &n in &a.counts {
            let scene = benchmark_scene(a.profile, n, &camera, cfg.seed);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let up: Vec<f64> = (0..camera.width() as usize * camera.height() as usize * 3)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let upstream = FeatureImage::from_data(camera.width(), camera.height(), 3, up)?;
            let opts = RenderOptions {
                precision: cfg.precision,
                ..RenderOptions::default()
            };
            let (mut fwd, mut bwd, mut oracle) = (Vec::new(), Vec::new(), Vec::new());
            let mut stats = RenderStats::default();
            for _ in 0..a.repeats {
                let t = Instant::now();
                let out = render_forward_with(&scene, &camera, &cfg.blend, &opts)?;
                fwd.push(t.elapsed().as_secs_f64() * 1e3);
                let t = Instant::now();
                render_backward(
                    &scene,
                    &camera,
                    &cfg.blend,
                    out.buffer.as_ref().expect("buffer"),
                    &upstream,
                    &BackwardOptions::default(),
                )?;
                bwd.push(t.elapsed().as_secs_f64() * 1e3);
                if n <= a.oracle_max {
                    let t = Instant::now();
                    oracle_render(&scene, &camera, &cfg.blend.with_tau(0.0));
                    oracle.push(t.elapsed().as_secs_f64() * 1e3);
                }
                stats = out.stats;
            }
            let (fm, fs_) = mean_std(&fwd);
            let (bm, bs) = mean_std(&bwd);
            let om = if oracle.is_empty() {
                String::new()
            } else {
                format!("{:.3}", mean_std(&oracle).0)
            };
            let _ = writeln!(
                csv,
                "{n},{profile},{},{},{},{fm:.3},{fs_:.3},{bm:.3},{bs:.3},{om},{},{},{},{},{:.4}",
                a.width,
                a.height,
                a.repeats,
                stats.spheres_on_sensor,
                stats.records_scanned,
                stats.candidates_tested,
                stats.hits_blended,
                stats.early_stop_ratio()
            );
        }
        Ok(())
    })??;
    match &a.out {
        Some(p) => fs::write(p, &csv).map_err(|e| Error::io(p, e))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_convert(a: &ConvertArgs) -> Result<()> {
    let background = a.background.clone().unwrap_or_else(|| vec![0.0; a.feature_dim]);
    let scene = import_point_cloud(
        &a.ply,
        &PointCloudImport {
            feature_dim: a.feature_dim,
            background,
            radius: a.radius,
            opacity: a.opacity,
        },
    )?;
    save_scene(&scene, &a.out)?;
    println!("converted {} points to {}", scene.len(), a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_camera_vectors() {
        assert_eq!(
            parse_numbers("0 0 0, 0 0 0 5 2").unwrap(),
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0, 2.0]
        );
        assert!(parse_numbers("1 x 2").is_err());
    }

    #[test]
    fn divergence_maps_to_exit_code_one() {
        assert_eq!(
            exit_code(&Error::Divergence {
                step: 3,
                loss: f64::NAN
            }),
            1
        );
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["softsphere", "render"]), 2);
        assert_eq!(run(["softsphere", "frobnicate"]), 2);
        assert_eq!(
            run([
                "softsphere",
                "render",
                "--random",
                "3",
                "--out",
                "x.png",
                "--precision",
                "16"
            ]),
            2
        );
    }

    #[test]
    fn light_flag_parsing() {
        let l = parse_light("0,0,2,0.5,0.1").unwrap();
        assert_eq!(l.direction, Vector3::new(0.0, 0.0, 1.0));
        assert!(parse_light("1,2,3").is_err());
    }
}
