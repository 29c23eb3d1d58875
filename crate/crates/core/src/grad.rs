//! Backward pass: per-pixel gradients from the stored top-K hits, chained
//! through the blend weights and the ray geometry into sphere and camera
//! parameters.
//!
//! Pixels are processed per tile; each tile collects per-sphere partial sums
//! in first-seen order and the partials are merged in tile order, so the
//! result does not depend on the number of workers.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::blend::{hit_weight, BlendParams};
use crate::camera::{Camera, Projection};
use crate::error::{Error, Result};
use crate::imaging::FeatureImage;
use crate::raster::{compute_bounds, ray_geometry, tile_grid, BackwardBuffer, DrawRecord, DEFAULT_TILE_SIZE};
use crate::scene::SphereScene;

/// Projected radius (pixels) at or below which position and radius
/// gradients are dropped.
pub const DEFAULT_GATE_RADIUS_PX: f64 = 3.0;
/// Scale applied to each sphere's camera-gradient contribution before it is
/// divided by the sphere's pixel count.
pub const DEFAULT_CAMERA_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardOptions {
    /// Average sphere gradients over contributing pixels and scale camera
    /// contributions by `camera_scale / pixel_count`.
    pub normalize: bool,
    pub gate_small_spheres: bool,
    pub gate_radius_px: f64,
    pub camera_scale: f64,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        Self {
            normalize: true,
            gate_small_spheres: true,
            gate_radius_px: DEFAULT_GATE_RADIUS_PX,
            camera_scale: DEFAULT_CAMERA_SCALE,
        }
    }
}

impl BackwardOptions {
    /// Exact derivatives of the rendered image: no averaging, no gating.
    pub fn raw() -> Self {
        Self {
            normalize: false,
            gate_small_spheres: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGradients {
    feature_dim: usize,
    pub d_position: Vec<Vector3<f64>>,
    pub d_radius: Vec<f64>,
    /// With respect to the stored (unclamped) opacity.
    pub d_opacity: Vec<f64>,
    /// `len() * feature_dim` values.
    pub d_feature: Vec<f64>,
    /// Pixels whose stored hits include the sphere.
    pub pixel_count: Vec<u32>,
}

impl SceneGradients {
    pub fn zeros(len: usize, feature_dim: usize) -> Self {
        Self {
            feature_dim,
            d_position: vec![Vector3::zeros(); len],
            d_radius: vec![0.0; len],
            d_opacity: vec![0.0; len],
            d_feature: vec![0.0; len * feature_dim],
            pixel_count: vec![0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.d_radius.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_radius.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.d_feature[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn feature_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.d_feature[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    /// Flattened as per sphere `[position, radius, opacity, feature..]`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len() * (5 + self.feature_dim));
        for i in 0..self.len() {
            v.extend(self.d_position[i].iter());
            v.push(self.d_radius[i]);
            v.push(self.d_opacity[i]);
            v.extend(self.feature(i));
        }
        v
    }

    /// Elementwise sum, used to combine views.
    pub fn add_assign(&mut self, o: &SceneGradients) -> Result<()> {
        if o.len() != self.len() || o.feature_dim != self.feature_dim {
            return Err(Error::Dimension("gradient buffers differ in shape".into()));
        }
        for i in 0..self.len() {
            self.d_position[i] += o.d_position[i];
            self.d_radius[i] += o.d_radius[i];
            self.d_opacity[i] += o.d_opacity[i];
            self.pixel_count[i] += o.pixel_count[i];
        }
        for (a, b) in self.d_feature.iter_mut().zip(&o.d_feature) {
            *a += b;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraGradients {
    pub d_translation: Vector3<f64>,
    /// Matches the camera's rotation parameterization (3 or 6 values).
    pub d_rotation: Vec<f64>,
    pub d_focal: f64,
    pub d_sensor_width: f64,
}

impl CameraGradients {
    pub fn zeros(camera: &Camera) -> Self {
        Self {
            d_translation: Vector3::zeros(),
            d_rotation: vec![0.0; camera.rotation().param_count()],
            d_focal: 0.0,
            d_sensor_width: 0.0,
        }
    }

    /// Same layout as [`Camera::to_vector`].
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.d_translation.iter().copied().collect();
        v.extend(&self.d_rotation);
        v.push(self.d_focal);
        v.push(self.d_sensor_width);
        v
    }
}

/// Gradient of one pixel's loss with respect to one stored hit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HitContribution {
    /// Blend weight; the feature gradient is `weight * upstream`.
    pub weight: f64,
    /// With respect to the camera-frame center.
    pub d_center: Vector3<f64>,
    pub d_radius: f64,
    /// With respect to the clamped opacity.
    pub d_opacity: f64,
    pub d_focal: f64,
    pub d_sensor_width: f64,
}

/// Geometry shared by all hits of one pixel.
struct PixelRay {
    origin: Vector3<f64>,
    dir: Vector3<f64>,
    sensor: (f64, f64),
}

fn pixel_ray(camera: &Camera, x: u32, y: u32) -> PixelRay {
    let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
    let (origin, dir) = camera.camera_ray(u, v);
    PixelRay {
        origin,
        dir,
        sensor: camera.sensor_point(u, v),
    }
}

#[allow(clippy::too_many_arguments)]
fn backward_pixel_with<F>(
    x: u32,
    y: u32,
    upstream: &[f64],
    buffer: &BackwardBuffer,
    scene: &SphereScene,
    camera: &Camera,
    params: &BlendParams,
    geometry: &[DrawRecord],
    mut emit: F,
) where
    F: FnMut(u32, &HitContribution),
{
    let entries = buffer.entries(x, y);
    if entries.is_empty() || upstream.iter().all(|&g| g == 0.0) {
        return;
    }
    let gamma = params.effective_gamma();
    let log_d = buffer.log_denominator(x, y);
    let spheres = scene.spheres();

    // reconstruct the blended feature from the stored hits
    let w_bg = buffer.background_weight(x, y);
    let mut f_rec: Vec<f64> = scene.background().iter().map(|b| b * w_bg).collect();
    let mut weights = Vec::with_capacity(entries.len());
    for e in entries {
        let s = &spheres[e.sphere_id as usize];
        let w = hit_weight(e.z, e.closeness, s.clamped_opacity(), log_d, gamma);
        for (fr, f) in f_rec.iter_mut().zip(&s.feature) {
            *fr += w * f;
        }
        weights.push(w);
    }

    let ray = pixel_ray(camera, x, y);
    let (near, far) = (camera.near(), camera.far());
    let f = camera.focal_length();
    let s_w = camera.sensor_width();
    let width = camera.width() as f64;
    for (e, &w) in entries.iter().zip(&weights) {
        let sphere = &spheres[e.sphere_id as usize];
        let o = sphere.clamped_opacity();
        let ds: f64 = upstream
            .iter()
            .zip(sphere.feature.iter().zip(&f_rec))
            .map(|(g, (fi, fr))| g * (fi - fr))
            .sum();
        let scaled = (o * e.z / gamma - log_d).exp();
        let d_z = ds * w * o / gamma;
        let d_c = ds * o * scaled;
        let d_o = ds * e.closeness * scaled * (1.0 + o * e.z / gamma);

        let rec = &geometry[e.sphere_id as usize];
        let q = rec.position;
        let geo = ray_geometry(&q, &ray.origin, &ray.dir);
        let dist = geo.dist2.sqrt();
        let g_lambda = if geo.lambda > near && geo.lambda < far {
            -d_z / (far - near)
        } else {
            0.0
        };
        let footprint_active = rec.subpixel && rec.effective_radius > rec.radius;
        let r_eff = rec.effective_radius;
        let (g_dist, g_r, g_fp) = if footprint_active {
            (-d_c / r_eff, 0.0, d_c * dist / (r_eff * r_eff))
        } else {
            (-d_c / rec.radius, d_c * dist / (rec.radius * rec.radius), 0.0)
        };
        let unit = if dist > 0.0 {
            geo.offset / dist
        } else {
            Vector3::zeros()
        };
        let g_v = ray.dir * g_lambda + unit * g_dist;
        let g_dir = geo.v * g_lambda - unit * (g_dist * geo.lambda);
        let mut g_q = g_v;
        let (xs, ys) = ray.sensor;
        let (mut g_f, mut g_s) = match camera.projection() {
            Projection::Pinhole => {
                let n = Vector3::new(xs, ys, f);
                let nn = n.norm();
                let g_n = (g_dir - ray.dir * ray.dir.dot(&g_dir)) / nn;
                (g_n.z, (g_n.x * xs + g_n.y * ys) / s_w)
            }
            Projection::Orthographic => {
                let g_o = -g_v;
                (0.0, (g_o.x * xs + g_o.y * ys) / s_w)
            }
        };
        if footprint_active {
            match camera.projection() {
                Projection::Pinhole => {
                    let qn = q.norm();
                    g_q += q / qn * (g_fp * s_w / (width * f));
                    g_s += g_fp * qn / (width * f);
                    g_f -= g_fp * qn * s_w / (width * f * f);
                }
                Projection::Orthographic => g_s += g_fp / width,
            }
        }
        emit(
            e.sphere_id,
            &HitContribution {
                weight: w,
                d_center: g_q,
                d_radius: g_r,
                d_opacity: d_o,
                d_focal: g_f,
                d_sensor_width: g_s,
            },
        );
    }
}

/// Gradient contributions of one pixel, one per stored hit. `geometry` is the
/// draw-record array in scene order (see [`compute_bounds`]).
#[allow(clippy::too_many_arguments)]
pub fn backward_pixel(
    x: u32,
    y: u32,
    upstream: &[f64],
    buffer: &BackwardBuffer,
    scene: &SphereScene,
    camera: &Camera,
    params: &BlendParams,
    geometry: &[DrawRecord],
) -> Vec<(u32, HitContribution)> {
    let mut out = Vec::new();
    backward_pixel_with(x, y, upstream, buffer, scene, camera, params, geometry, |id, c| {
        out.push((id, *c))
    });
    out
}

/// Per-sphere sums over a set of pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePartial {
    pub d_center: Vector3<f64>,
    pub d_radius: f64,
    pub d_opacity: f64,
    pub d_feature: Vec<f64>,
    pub d_focal: f64,
    pub d_sensor_width: f64,
    pub pixels: u32,
}

/// Partial sums of one tile, spheres in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct TilePartials {
    pub ids: Vec<u32>,
    pub sums: Vec<SpherePartial>,
}

fn tile_partials(
    tile: crate::raster::TileRect,
    upstream: &FeatureImage,
    buffer: &BackwardBuffer,
    scene: &SphereScene,
    camera: &Camera,
    params: &BlendParams,
    geometry: &[DrawRecord],
) -> TilePartials {
    let d = scene.feature_dim();
    let mut index: HashMap<u32, usize> = HashMap::new();
    let mut out = TilePartials::default();
    for y in tile.y0..=tile.y1 {
        for x in tile.x0..=tile.x1 {
            let g = upstream.pixel(x, y);
            backward_pixel_with(x, y, g, buffer, scene, camera, params, geometry, |id, c| {
                let slot = *index.entry(id).or_insert_with(|| {
                    out.ids.push(id);
                    out.sums.push(SpherePartial {
                        d_center: Vector3::zeros(),
                        d_radius: 0.0,
                        d_opacity: 0.0,
                        d_feature: vec![0.0; d],
                        d_focal: 0.0,
                        d_sensor_width: 0.0,
                        pixels: 0,
                    });
                    out.sums.len() - 1
                });
                let p = &mut out.sums[slot];
                p.d_center += c.d_center;
                p.d_radius += c.d_radius;
                p.d_opacity += c.d_opacity;
                for (a, gi) in p.d_feature.iter_mut().zip(g) {
                    *a += c.weight * gi;
                }
                p.d_focal += c.d_focal;
                p.d_sensor_width += c.d_sensor_width;
                p.pixels += 1;
            });
        }
    }
    out
}

/// Merges tile partials in order and converts camera-frame sums into scene
/// and camera gradients, applying the normalization rules of `opts`.
pub fn accumulate_and_normalize(
    partials: &[TilePartials],
    scene: &SphereScene,
    camera: &Camera,
    opts: &BackwardOptions,
) -> (SceneGradients, CameraGradients) {
    let n = scene.len();
    let d = scene.feature_dim();
    let mut centers = vec![Vector3::zeros(); n];
    let mut focal = vec![0.0; n];
    let mut sensor = vec![0.0; n];
    let mut grads = SceneGradients::zeros(n, d);
    for tile in partials {
        for (&id, p) in tile.ids.iter().zip(&tile.sums) {
            let i = id as usize;
            centers[i] += p.d_center;
            grads.d_radius[i] += p.d_radius;
            grads.d_opacity[i] += p.d_opacity;
            for (a, b) in grads.feature_mut(i).iter_mut().zip(&p.d_feature) {
                *a += b;
            }
            focal[i] += p.d_focal;
            sensor[i] += p.d_sensor_width;
            grads.pixel_count[i] += p.pixels;
        }
    }

    let r = camera.rotation_matrix();
    let t = camera.translation();
    let mut cam = CameraGradients::zeros(camera);
    let mut g_rot = Matrix3::zeros();
    let mut g_center_sum = Vector3::zeros();
    for (i, s) in scene.spheres().iter().enumerate() {
        let count = grads.pixel_count[i];
        if count == 0 {
            continue;
        }
        // clamp: no gradient below zero opacity, straight through above one
        if s.opacity <= 0.0 {
            grads.d_opacity[i] = 0.0;
        }
        let (scale, cam_scale) = if opts.normalize {
            (1.0 / count as f64, opts.camera_scale / count as f64)
        } else {
            (1.0, 1.0)
        };
        grads.d_position[i] = r * centers[i] * scale;
        grads.d_radius[i] *= scale;
        grads.d_opacity[i] *= scale;
        grads.feature_mut(i).iter_mut().for_each(|v| *v *= scale);

        let gq = centers[i] * cam_scale;
        g_center_sum += gq;
        g_rot += (s.position - t) * gq.transpose();
        cam.d_focal += focal[i] * cam_scale;
        cam.d_sensor_width += sensor[i] * cam_scale;
    }
    cam.d_translation = -(r * g_center_sum);
    cam.d_rotation = camera.rotation().backward(&g_rot);
    (grads, cam)
}

/// Zeroes position and radius gradients of spheres whose projected radius is
/// at most `threshold_px`. `geometry` is in scene order.
pub fn gate_small_spheres(grads: &mut SceneGradients, geometry: &[DrawRecord], threshold_px: f64) {
    for (i, rec) in geometry.iter().enumerate() {
        if rec.projected_radius <= threshold_px {
            grads.d_position[i] = Vector3::zeros();
            grads.d_radius[i] = 0.0;
        }
    }
}

/// Gradients of `sum(upstream * image)` with respect to every sphere and
/// camera parameter, for the image that produced `buffer`.
pub fn render_backward(
    scene: &SphereScene,
    camera: &Camera,
    params: &BlendParams,
    buffer: &BackwardBuffer,
    upstream: &FeatureImage,
    opts: &BackwardOptions,
) -> Result<(SceneGradients, CameraGradients)> {
    if buffer.num_spheres() != scene.len() {
        return Err(Error::Contract(format!(
            "backward buffer was produced for {} spheres, scene has {}",
            buffer.num_spheres(),
            scene.len()
        )));
    }
    let bp = buffer.params();
    if bp.gamma != params.gamma || bp.epsilon != params.epsilon {
        return Err(Error::Contract("blend parameters differ from the forward pass".into()));
    }
    if buffer.width() != camera.width() || buffer.height() != camera.height() {
        return Err(Error::Dimension(format!(
            "buffer is {}x{}, camera is {}x{}",
            buffer.width(),
            buffer.height(),
            camera.width(),
            camera.height()
        )));
    }
    if upstream.width() != camera.width()
        || upstream.height() != camera.height()
        || upstream.feature_dim() != scene.feature_dim()
    {
        return Err(Error::Dimension(format!(
            "upstream image is {}x{}x{}, expected {}x{}x{}",
            upstream.width(),
            upstream.height(),
            upstream.feature_dim(),
            camera.width(),
            camera.height(),
            scene.feature_dim()
        )));
    }
    let (_, geometry) = compute_bounds(scene, camera);
    let tiles = tile_grid(camera.width(), camera.height(), DEFAULT_TILE_SIZE);
    let partials: Vec<TilePartials> = tiles
        .par_iter()
        .map(|t| tile_partials(*t, upstream, buffer, scene, camera, params, &geometry))
        .collect();
    let (mut grads, cam) = accumulate_and_normalize(&partials, scene, camera, opts);
    if opts.gate_small_spheres {
        gate_small_spheres(&mut grads, &geometry, opts.gate_radius_px);
    }
    Ok((grads, cam))
}
