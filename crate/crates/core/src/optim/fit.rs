//! The fitting loop: render, shade, compare, back-propagate, step.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{opacity_depth_regularizer, photometric_loss};
use super::refine::{prune, subdivide, PruneConfig, SubdivideConfig};
use crate::blend::BlendParams;
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::grad::{render_backward, BackwardOptions, SceneGradients};
use crate::imaging::FeatureImage;
use crate::raster::{render_forward_with, BackwardBuffer, RenderOptions};
use crate::scene::{SphereScene, DEFAULT_RADIUS_MIN};
use crate::shade::Shading;

/// Per-group Adam learning rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningRates {
    pub position: f64,
    pub radius: f64,
    pub opacity: f64,
    pub feature: f64,
    pub camera: f64,
    pub shader: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self::for_scene_scale(1.0)
    }
}

impl LearningRates {
    /// Defaults with the position rate proportional to the scene extent.
    pub fn for_scene_scale(scale: f64) -> Self {
        Self {
            position: 1e-3 * scale,
            radius: 1e-3,
            opacity: 1e-2,
            feature: 1e-2,
            camera: 1e-4,
            shader: 1e-2,
        }
    }

    fn all(&self) -> [f64; 6] {
        [
            self.position,
            self.radius,
            self.opacity,
            self.feature,
            self.camera,
            self.shader,
        ]
    }
}

/// Blending softness interpolated log-linearly from `start` to `end` over the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaSchedule {
    pub start: f64,
    pub end: f64,
}

impl Default for GammaSchedule {
    fn default() -> Self {
        Self { start: 0.1, end: 1e-4 }
    }
}

impl GammaSchedule {
    pub fn constant(gamma: f64) -> Self {
        Self {
            start: gamma,
            end: gamma,
        }
    }

    pub fn at(&self, step: usize, steps: usize) -> f64 {
        if steps <= 1 {
            return self.start;
        }
        let t = step.min(steps - 1) as f64 / (steps - 1) as f64;
        (self.start.ln() + t * (self.end.ln() - self.start.ln())).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub steps: usize,
    pub learning_rates: LearningRates,
    /// Learning rates are multiplied by `lr_decay^step`.
    pub lr_decay: f64,
    pub adam: AdamConfig,
    pub gamma: GammaSchedule,
    pub epsilon: f64,
    pub tau: f64,
    pub top_k: usize,
    /// Weight of the opacity-depth regularizer.
    pub lambda_od: f64,
    pub prune: PruneConfig,
    pub subdivide: SubdivideConfig,
    /// Refine camera poses (translation and rotation) as well.
    pub optimize_camera: bool,
    /// Observations rendered per optimizer step.
    pub views_per_step: usize,
    pub radius_min: f64,
    pub normalize_gradients: bool,
    pub gate_small_spheres: bool,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            learning_rates: LearningRates::default(),
            lr_decay: 1.0,
            adam: AdamConfig::default(),
            gamma: GammaSchedule::default(),
            epsilon: 1e-2,
            tau: 0.0,
            top_k: 5,
            lambda_od: 0.0,
            prune: PruneConfig::default(),
            subdivide: SubdivideConfig::default(),
            optimize_camera: false,
            views_per_step: 1,
            radius_min: DEFAULT_RADIUS_MIN,
            normalize_gradients: true,
            gate_small_spheres: true,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self
            .learning_rates
            .all()
            .iter()
            .any(|&lr| !(lr >= 0.0) || !lr.is_finite())
        {
            return Err(Error::Config("learning rates must be finite and >= 0".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!(
                "lr_decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        for g in [self.gamma.start, self.gamma.end] {
            if !(1e-5..=1.0).contains(&g) {
                return Err(Error::Config(format!(
                    "gamma schedule values must lie in [1e-5, 1], got {g}"
                )));
            }
        }
        if self.views_per_step == 0 {
            return Err(Error::Config("views_per_step must be at least 1".into()));
        }
        if !(self.radius_min > 0.0) {
            return Err(Error::Config("radius_min must be > 0".into()));
        }
        if !(self.subdivide.radius_scale > 0.0) {
            return Err(Error::Config("subdivision radius scale must be > 0".into()));
        }
        self.adam.validate()?;
        self.blend_params(self.gamma.start).validate()
    }

    pub fn blend_params(&self, gamma: f64) -> BlendParams {
        BlendParams {
            gamma,
            epsilon: self.epsilon,
            tau: self.tau,
            top_k: self.top_k,
        }
    }

    fn backward_options(&self) -> BackwardOptions {
        BackwardOptions {
            normalize: self.normalize_gradients,
            gate_small_spheres: self.gate_small_spheres,
            ..BackwardOptions::default()
        }
    }
}

/// A posed target image.
#[derive(Debug, Clone)]
pub struct Observation {
    pub image: FeatureImage,
    pub camera: Camera,
}

/// Adam moments for every parameter group.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizerState {
    pub position: AdamState,
    pub radius: AdamState,
    pub opacity: AdamState,
    pub feature: AdamState,
    pub cameras: Vec<AdamState>,
    pub shader: AdamState,
}

impl OptimizerState {
    fn for_scene(n: usize, d: usize, cameras: &[Camera], shader_params: usize) -> Self {
        Self {
            position: AdamState::new(3 * n),
            radius: AdamState::new(n),
            opacity: AdamState::new(n),
            feature: AdamState::new(d * n),
            cameras: cameras.iter().map(|c| AdamState::new(pose_len(c))).collect(),
            shader: AdamState::new(shader_params),
        }
    }

    fn reset_spheres(&mut self, n: usize, d: usize) {
        self.position = AdamState::new(3 * n);
        self.radius = AdamState::new(n);
        self.opacity = AdamState::new(n);
        self.feature = AdamState::new(d * n);
    }

    fn retain_spheres(&mut self, keep: &[bool], d: usize) {
        self.position.retain_rows(3, keep);
        self.radius.retain_rows(1, keep);
        self.opacity.retain_rows(1, keep);
        self.feature.retain_rows(d, keep);
    }
}

fn pose_len(c: &Camera) -> usize {
    3 + c.rotation().param_count()
}

/// One entry of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    /// Mean photometric loss over the views of this step, plus the regularizer.
    pub loss: f64,
    pub photometric: f64,
    pub gamma: f64,
    pub spheres: usize,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub scene: SphereScene,
    pub cameras: Vec<Camera>,
    pub shading: Shading,
    pub trace: Vec<StepRecord>,
}

/// Per-sphere count of pixels whose stored hits include the sphere.
pub fn visible_pixel_counts(buffer: &BackwardBuffer) -> Vec<u64> {
    let mut counts = vec![0u64; buffer.num_spheres()];
    for y in 0..buffer.height() {
        for x in 0..buffer.width() {
            for e in buffer.entries(x, y) {
                counts[e.sphere_id as usize] += 1;
            }
        }
    }
    counts
}

/// Observation order of one epoch, a function of seed and epoch only so that
/// resumed runs see the same sequence.
fn epoch_order(seed: u64, n: usize, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Stepwise driver of the fitting loop; [`fit`] runs it to completion.
pub struct Fitter {
    config: FitConfig,
    scene: SphereScene,
    observations: Vec<Observation>,
    shading: Shading,
    state: OptimizerState,
    step: usize,
    epoch: usize,
    order: Vec<usize>,
    cursor: usize,
    epoch_pixels: Vec<u64>,
    /// Set after resuming mid-epoch: the pixel counts miss the steps before
    /// the resume, so that epoch does not prune.
    partial_epoch: bool,
    trace: Vec<StepRecord>,
}

impl Fitter {
    pub fn new(
        scene: SphereScene,
        observations: Vec<Observation>,
        shading: Shading,
        config: FitConfig,
    ) -> Result<Self> {
        config.validate()?;
        scene.validate()?;
        if observations.is_empty() {
            return Err(Error::Config("fitting needs at least one observation".into()));
        }
        let out_dim = shading.output_dim(scene.feature_dim());
        for (i, o) in observations.iter().enumerate() {
            let img = &o.image;
            if img.width() != o.camera.width() || img.height() != o.camera.height() || img.feature_dim() != out_dim {
                return Err(Error::Dimension(format!(
                    "observation {i}: image is {}x{}x{}, camera and shading expect {}x{}x{}",
                    img.width(),
                    img.height(),
                    img.feature_dim(),
                    o.camera.width(),
                    o.camera.height(),
                    out_dim
                )));
            }
        }
        let cameras: Vec<Camera> = observations.iter().map(|o| o.camera.clone()).collect();
        let shader_params = shading.trainable_params().map_or(0, |p| p.len());
        let state = OptimizerState::for_scene(scene.len(), scene.feature_dim(), &cameras, shader_params);
        let order = epoch_order(config.seed, observations.len(), 0);
        let n = scene.len();
        Ok(Self {
            config,
            scene,
            observations,
            shading,
            state,
            step: 0,
            epoch: 0,
            order,
            cursor: 0,
            epoch_pixels: vec![0; n],
            partial_epoch: false,
            trace: Vec::new(),
        })
    }

    /// Restores optimizer moments and the step counter, e.g. from a checkpoint.
    /// The view order continues where a run of `step` steps would be.
    pub fn resume(&mut self, state: OptimizerState, step: usize) -> Result<()> {
        let fresh = OptimizerState::for_scene(
            self.scene.len(),
            self.scene.feature_dim(),
            &self.cameras(),
            self.state.shader.len(),
        );
        let same = |a: &AdamState, b: &AdamState| a.len() == b.len() && a.v.len() == b.v.len();
        if !same(&state.position, &fresh.position)
            || !same(&state.feature, &fresh.feature)
            || !same(&state.shader, &fresh.shader)
            || state.cameras.len() != fresh.cameras.len()
            || !state.cameras.iter().zip(&fresh.cameras).all(|(a, b)| same(a, b))
        {
            return Err(Error::Dimension(
                "optimizer state does not match the scene and cameras".into(),
            ));
        }
        self.state = state;
        self.step = step;
        // Epochs end lazily on the next view request, so a run that consumed
        // a whole number of epochs still sits at the end of the last one.
        let n = self.observations.len();
        let consumed = step * self.config.views_per_step.min(n);
        self.epoch = consumed.saturating_sub(1) / n;
        self.cursor = consumed - self.epoch * n;
        self.order = epoch_order(self.config.seed, n, self.epoch);
        self.epoch_pixels = vec![0; self.scene.len()];
        self.partial_epoch = consumed > 0;
        Ok(())
    }

    pub fn scene(&self) -> &SphereScene {
        &self.scene
    }

    pub fn cameras(&self) -> Vec<Camera> {
        self.observations.iter().map(|o| o.camera.clone()).collect()
    }

    pub fn shading(&self) -> &Shading {
        &self.shading
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn trace(&self) -> &[StepRecord] {
        &self.trace
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.steps
    }

    pub fn gamma(&self) -> f64 {
        self.config.gamma.at(self.step, self.config.steps)
    }

    fn next_view(&mut self) -> Result<usize> {
        if self.cursor == self.order.len() {
            self.end_epoch()?;
        }
        let v = self.order[self.cursor];
        self.cursor += 1;
        Ok(v)
    }

    fn end_epoch(&mut self) -> Result<()> {
        self.epoch += 1;
        self.cursor = 0;
        let every = self.config.prune.every_epochs;
        if every > 0 && self.epoch.is_multiple_of(every) && !self.partial_epoch {
            let keep = prune(&mut self.scene, &self.epoch_pixels, &self.config.prune)?;
            self.state.retain_spheres(&keep, self.scene.feature_dim());
        }
        self.epoch_pixels = vec![0; self.scene.len()];
        self.partial_epoch = false;
        self.order = epoch_order(self.config.seed, self.observations.len(), self.epoch);
        Ok(())
    }

    /// Renders the current scene through observation `view`'s camera and shades it.
    pub fn render_view(&self, view: usize, gamma: f64) -> Result<FeatureImage> {
        let cam = &self.observations[view].camera;
        let opts = RenderOptions {
            keep_buffer: false,
            ..RenderOptions::default()
        };
        let out = render_forward_with(&self.scene, cam, &self.config.blend_params(gamma), &opts)?;
        self.shading.apply(&out.image, cam)
    }

    /// One optimizer step over `views_per_step` observations.
    pub fn step(&mut self) -> Result<StepRecord> {
        let gamma = self.gamma();
        let params = self.config.blend_params(gamma);
        let opts = self.config.backward_options();
        let nv = self.config.views_per_step.min(self.observations.len());
        let views: Vec<usize> = (0..nv).map(|_| self.next_view()).collect::<Result<_>>()?;

        let (n, d) = (self.scene.len(), self.scene.feature_dim());
        let mut grads = SceneGradients::zeros(n, d);
        let mut cam_grads: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut shader_grad: Option<Vec<f64>> = None;
        let (mut photometric, mut reg) = (0.0, 0.0);
        for &v in &views {
            let obs = &self.observations[v];
            let out = render_forward_with(&self.scene, &obs.camera, &params, &RenderOptions::default())?;
            let buffer = out.buffer.as_ref().expect("buffer requested");
            for (acc, c) in self.epoch_pixels.iter_mut().zip(visible_pixel_counts(buffer)) {
                *acc += c;
            }
            let shaded = self.shading.apply(&out.image, &obs.camera)?;
            let (loss, upstream) = photometric_loss(&shaded, &obs.image)?;
            photometric += loss / nv as f64;
            let (d_f, d_shader) = self.shading.backward(&out.image, &obs.camera, &upstream)?;
            let (g, cg) = render_backward(&self.scene, &obs.camera, &params, buffer, &d_f, &opts)?;
            grads.add_assign(&g)?;
            reg += opacity_depth_regularizer(&self.scene, &obs.camera, self.config.lambda_od, Some(&mut grads));
            if self.config.optimize_camera {
                let mut cv = cg.to_vector();
                cv.truncate(pose_len(&obs.camera));
                cam_grads.push((v, cv));
            }
            if let Some(ds) = d_shader {
                match &mut shader_grad {
                    Some(acc) => acc.iter_mut().zip(&ds).for_each(|(a, b)| *a += b),
                    None => shader_grad = Some(ds),
                }
            }
        }
        let loss = photometric + reg / nv as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence { step: self.step, loss });
        }

        let scale = 1.0 / nv as f64;
        let decay = self.config.lr_decay.powi(self.step.min(i32::MAX as usize) as i32);
        let lr = self.config.learning_rates;
        let adam = self.config.adam;
        let spheres = self.scene.spheres_mut();

        let mut pos: Vec<f64> = spheres
            .iter()
            .flat_map(|s| s.position.iter().copied().collect::<Vec<_>>())
            .collect();
        let g_pos: Vec<f64> = grads
            .d_position
            .iter()
            .flat_map(|g| [g.x * scale, g.y * scale, g.z * scale])
            .collect();
        adam_step(&mut pos, &g_pos, &mut self.state.position, lr.position * decay, &adam)?;
        let mut rad: Vec<f64> = spheres.iter().map(|s| s.radius).collect();
        let g_rad: Vec<f64> = grads.d_radius.iter().map(|g| g * scale).collect();
        adam_step(&mut rad, &g_rad, &mut self.state.radius, lr.radius * decay, &adam)?;
        let mut opa: Vec<f64> = spheres.iter().map(|s| s.opacity).collect();
        let g_opa: Vec<f64> = grads.d_opacity.iter().map(|g| g * scale).collect();
        adam_step(&mut opa, &g_opa, &mut self.state.opacity, lr.opacity * decay, &adam)?;
        let mut feat: Vec<f64> = spheres.iter().flat_map(|s| s.feature.iter().copied()).collect();
        let g_feat: Vec<f64> = grads.d_feature.iter().map(|g| g * scale).collect();
        adam_step(&mut feat, &g_feat, &mut self.state.feature, lr.feature * decay, &adam)?;
        for (i, s) in spheres.iter_mut().enumerate() {
            s.position = Vector3::new(pos[3 * i], pos[3 * i + 1], pos[3 * i + 2]);
            s.radius = rad[i];
            s.opacity = opa[i];
            s.feature.copy_from_slice(&feat[d * i..d * (i + 1)]);
        }
        self.scene.clamp_radii(self.config.radius_min);

        for (v, g) in cam_grads {
            let cam = &self.observations[v].camera;
            let mut vec = cam.to_vector();
            let k = pose_len(cam);
            let g: Vec<f64> = g.iter().map(|x| x * scale).collect();
            adam_step(&mut vec[..k], &g, &mut self.state.cameras[v], lr.camera * decay, &adam)?;
            self.observations[v].camera = Camera::from_vector(&vec, *cam.sensor())?;
        }
        if let (Some(g), Some(mut p)) = (shader_grad, self.shading.trainable_params()) {
            let g: Vec<f64> = g.iter().map(|x| x * scale).collect();
            adam_step(&mut p, &g, &mut self.state.shader, lr.shader * decay, &adam)?;
            self.shading.set_trainable_params(&p)?;
        }
        self.scene
            .validate()
            .map_err(|_| Error::Divergence { step: self.step, loss })?;

        let record = StepRecord {
            step: self.step,
            epoch: self.epoch,
            loss,
            photometric,
            gamma,
            spheres: self.scene.len(),
        };
        self.trace.push(record);
        self.step += 1;
        if self.config.subdivide.at_steps.contains(&self.step) {
            subdivide(&mut self.scene, self.config.subdivide.radius_scale)?;
            self.state.reset_spheres(self.scene.len(), d);
            self.epoch_pixels = vec![0; self.scene.len()];
        }
        Ok(record)
    }

    pub fn run(mut self) -> Result<FitResult> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> FitResult {
        FitResult {
            cameras: self.observations.iter().map(|o| o.camera.clone()).collect(),
            scene: self.scene,
            shading: self.shading,
            trace: self.trace,
        }
    }
}

/// Fits `scene` (and optionally the cameras and a trainable shader) to the
/// observations with Adam.
pub fn fit(
    scene: SphereScene,
    observations: Vec<Observation>,
    shading: Shading,
    config: FitConfig,
) -> Result<FitResult> {
    Fitter::new(scene, observations, shading, config)?.run()
}
