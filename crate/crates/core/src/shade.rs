//! Shading stages that turn a rendered feature image into colors.
//!
//! Every shader is a pure per-pixel map, so each comes with a backward
//! function that maps an upstream color gradient to a feature-image gradient
//! for [`crate::render_backward`].

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::imaging::FeatureImage;

/// Parallel light shining along `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalLight {
    pub direction: Vector3<f64>,
    pub intensity: f64,
    pub ambient: f64,
}

impl DirectionalLight {
    /// Normalizes `direction`.
    pub fn new(direction: Vector3<f64>, intensity: f64, ambient: f64) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Config("light direction must be a finite non-zero vector".into()));
        }
        if !(intensity >= 0.0) || !intensity.is_finite() {
            return Err(Error::Config(format!("light intensity must be >= 0, got {intensity}")));
        }
        if !(0.0..=1.0).contains(&ambient) {
            return Err(Error::Config(format!("ambient term must lie in [0, 1], got {ambient}")));
        }
        Ok(Self {
            direction: direction / n,
            intensity,
            ambient,
        })
    }
}

/// Derivative of `clamp(x, 0, 1)`: 1 strictly inside, 0 outside or at the ends.
#[inline]
fn clamp_pass(raw: f64) -> f64 {
    if raw > 0.0 && raw < 1.0 {
        1.0
    } else {
        0.0
    }
}

fn map_pixels<F>(input: &FeatureImage, out_dim: usize, f: F) -> FeatureImage
where
    F: Fn(usize, &[f64], &mut [f64]) + Sync,
{
    let d = input.feature_dim();
    let mut out = FeatureImage::new(input.width(), input.height(), out_dim);
    out.data_mut()
        .par_chunks_mut(out_dim)
        .zip(input.data().par_chunks(d))
        .enumerate()
        .for_each(|(i, (o, x))| f(i, x, o));
    out
}

/// Clamps a 3-channel image to `[0, 1]`.
pub fn shade_identity(f: &FeatureImage) -> Result<FeatureImage> {
    if f.feature_dim() != 3 {
        return Err(Error::Dimension(format!(
            "identity shading needs 3 channels, image has {}",
            f.feature_dim()
        )));
    }
    Ok(map_pixels(f, 3, |_, x, o| {
        for c in 0..3 {
            o[c] = x[c].clamp(0.0, 1.0);
        }
    }))
}

pub fn shade_identity_backward(f: &FeatureImage, upstream: &FeatureImage) -> Result<FeatureImage> {
    shade_identity(f)?;
    f.check_shape(upstream, "upstream")?;
    let mut out = upstream.clone();
    for (g, &x) in out.data_mut().iter_mut().zip(f.data()) {
        *g *= clamp_pass(x);
    }
    Ok(out)
}

fn check_diffuse(f: &FeatureImage, lights: &[DirectionalLight]) -> Result<()> {
    if f.feature_dim() != 6 {
        return Err(Error::Dimension(format!(
            "diffuse shading needs [albedo:3, normal:3] features, image has {} channels",
            f.feature_dim()
        )));
    }
    if lights.iter().any(|l| (l.direction.norm() - 1.0).abs() > 1e-9) {
        return Err(Error::Config("light directions must be unit vectors".into()));
    }
    Ok(())
}

/// Shading factor for one pixel and its derivative w.r.t. the unit normal.
fn diffuse_factor(n_hat: Option<Vector3<f64>>, lights: &[DirectionalLight]) -> (f64, Vector3<f64>) {
    let mut s: f64 = lights.iter().map(|l| l.ambient).sum();
    let mut ds = Vector3::zeros();
    if let Some(n) = n_hat {
        for l in lights {
            let cos = -n.dot(&l.direction);
            if cos > 0.0 {
                s += l.intensity * cos;
                ds -= l.direction * l.intensity;
            }
        }
    }
    (s, ds)
}

fn unit_normal(x: &[f64]) -> (Option<Vector3<f64>>, f64) {
    let n = Vector3::new(x[3], x[4], x[5]);
    let len = n.norm();
    if len > 0.0 {
        (Some(n / len), len)
    } else {
        (None, 0.0)
    }
}

/// `albedo * (sum of ambient terms + sum of intensity * max(0, n . -dir))`,
/// clamped to `[0, 1]`. Normals are renormalized per pixel; a zero normal
/// receives the ambient term only.
pub fn shade_diffuse(f: &FeatureImage, lights: &[DirectionalLight]) -> Result<FeatureImage> {
    check_diffuse(f, lights)?;
    Ok(map_pixels(f, 3, |_, x, o| {
        let (n_hat, _) = unit_normal(x);
        let (s, _) = diffuse_factor(n_hat, lights);
        for c in 0..3 {
            o[c] = (x[c] * s).clamp(0.0, 1.0);
        }
    }))
}

/// Gradient of `sum(upstream * shade_diffuse(f))` with respect to `f`.
pub fn shade_diffuse_backward(
    f: &FeatureImage,
    lights: &[DirectionalLight],
    upstream: &FeatureImage,
) -> Result<FeatureImage> {
    check_diffuse(f, lights)?;
    if upstream.width() != f.width() || upstream.height() != f.height() || upstream.feature_dim() != 3 {
        return Err(Error::Dimension(
            "upstream color gradient must be 3 channels at image size".into(),
        ));
    }
    let up = upstream.data();
    Ok(map_pixels(f, 6, |i, x, o| {
        let g = &up[3 * i..3 * i + 3];
        let (n_hat, len) = unit_normal(x);
        let (s, ds) = diffuse_factor(n_hat, lights);
        let mut d_s = 0.0;
        for c in 0..3 {
            let gc = g[c] * clamp_pass(x[c] * s);
            o[c] = gc * s;
            d_s += gc * x[c];
        }
        if let Some(n) = n_hat {
            let d_nhat = ds * d_s;
            let d_n = (d_nhat - n * n.dot(&d_nhat)) / len;
            o[3] = d_n.x;
            o[4] = d_n.y;
            o[5] = d_n.z;
        }
    }))
}

/// Per-pixel affine map from features (optionally concatenated with the
/// view direction) to RGB, followed by a clamp to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearShader {
    /// `inputs x 3`, row-major.
    pub weight: Vec<f64>,
    pub bias: [f64; 3],
    /// Append the 3-channel view direction to the features.
    pub view_conditioned: bool,
    /// Whether `fit` updates the shader parameters.
    pub trainable: bool,
}

impl LinearShader {
    /// Pass-through of the first three feature channels.
    pub fn identity(feature_dim: usize, view_conditioned: bool) -> Self {
        let inputs = feature_dim + if view_conditioned { 3 } else { 0 };
        let mut weight = vec![0.0; inputs * 3];
        for c in 0..3.min(feature_dim) {
            weight[c * 3 + c] = 1.0;
        }
        Self {
            weight,
            bias: [0.0; 3],
            view_conditioned,
            trainable: true,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.len() / 3
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + 3
    }

    /// Weights followed by the bias.
    pub fn params(&self) -> Vec<f64> {
        let mut v = self.weight.clone();
        v.extend_from_slice(&self.bias);
        v
    }

    pub fn set_params(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "linear shader has {} parameters, got {}",
                self.param_count(),
                v.len()
            )));
        }
        let n = self.weight.len();
        self.weight.copy_from_slice(&v[..n]);
        self.bias.copy_from_slice(&v[n..]);
        Ok(())
    }

    fn check(&self, f: &FeatureImage, view: Option<&FeatureImage>) -> Result<()> {
        if !self.weight.len().is_multiple_of(3) || !self.params().iter().all(|v| v.is_finite()) {
            return Err(Error::Config(
                "linear shader weights must be finite with 3 output columns".into(),
            ));
        }
        let extra = if self.view_conditioned { 3 } else { 0 };
        if self.inputs() != f.feature_dim() + extra {
            return Err(Error::Dimension(format!(
                "shader expects {} inputs, features provide {}",
                self.inputs(),
                f.feature_dim() + extra
            )));
        }
        match (self.view_conditioned, view) {
            (true, Some(v)) => {
                if v.width() != f.width() || v.height() != f.height() || v.feature_dim() != 3 {
                    return Err(Error::Dimension(
                        "view-direction plane must be 3 channels at image size".into(),
                    ));
                }
            }
            (true, None) => {
                return Err(Error::Config(
                    "view-conditioned shader needs a view-direction plane".into(),
                ))
            }
            (false, _) => {}
        }
        Ok(())
    }

    fn raw(&self, x: &[f64], view: &[f64], o: &mut [f64; 3]) {
        *o = self.bias;
        for (i, &xi) in x.iter().chain(view).enumerate() {
            let row = &self.weight[3 * i..3 * i + 3];
            for c in 0..3 {
                o[c] += xi * row[c];
            }
        }
    }
}

/// World-space unit ray directions through every pixel center.
pub fn view_direction_plane(camera: &Camera) -> FeatureImage {
    let (w, h) = (camera.width(), camera.height());
    let mut out = FeatureImage::new(w, h, 3);
    out.data_mut().par_chunks_mut(3).enumerate().for_each(|(i, o)| {
        let r = camera.pixel_ray(i as u32 % w, i as u32 / w);
        o.copy_from_slice(r.direction.as_slice());
    });
    out
}

fn view_slice<'a>(view: Option<&'a FeatureImage>, shader: &LinearShader, i: usize) -> &'a [f64] {
    match view {
        Some(v) if shader.view_conditioned => &v.data()[3 * i..3 * i + 3],
        _ => &[],
    }
}

pub fn shade_linear(f: &FeatureImage, shader: &LinearShader, view: Option<&FeatureImage>) -> Result<FeatureImage> {
    shader.check(f, view)?;
    Ok(map_pixels(f, 3, |i, x, o| {
        let mut raw = [0.0; 3];
        shader.raw(x, view_slice(view, shader, i), &mut raw);
        for c in 0..3 {
            o[c] = raw[c].clamp(0.0, 1.0);
        }
    }))
}

/// Gradients of `sum(upstream * shade_linear(...))`: the feature-image
/// gradient and the shader parameter gradient (layout of
/// [`LinearShader::params`]).
pub fn shade_linear_backward(
    f: &FeatureImage,
    shader: &LinearShader,
    view: Option<&FeatureImage>,
    upstream: &FeatureImage,
) -> Result<(FeatureImage, Vec<f64>)> {
    shader.check(f, view)?;
    if upstream.width() != f.width() || upstream.height() != f.height() || upstream.feature_dim() != 3 {
        return Err(Error::Dimension(
            "upstream color gradient must be 3 channels at image size".into(),
        ));
    }
    let d = f.feature_dim();
    let w = f.width() as usize;
    let up = upstream.data();
    let pass = |i: usize, x: &[f64]| -> [f64; 3] {
        let mut raw = [0.0; 3];
        shader.raw(x, view_slice(view, shader, i), &mut raw);
        let mut g = [0.0; 3];
        for c in 0..3 {
            g[c] = up[3 * i + c] * clamp_pass(raw[c]);
        }
        g
    };
    let d_f = map_pixels(f, d, |i, x, o| {
        let g = pass(i, x);
        for (k, oc) in o.iter_mut().enumerate() {
            let row = &shader.weight[3 * k..3 * k + 3];
            *oc = row[0] * g[0] + row[1] * g[1] + row[2] * g[2];
        }
    });
    // Per-row partial sums reduced in row order keep the result independent
    // of the thread count.
    let rows: Vec<Vec<f64>> = f
        .data()
        .par_chunks(w * d)
        .enumerate()
        .map(|(y, row)| {
            let mut acc = vec![0.0; shader.param_count()];
            for (xi, x) in row.chunks(d).enumerate() {
                let i = y * w + xi;
                let g = pass(i, x);
                for (k, &v) in x.iter().chain(view_slice(view, shader, i)).enumerate() {
                    for c in 0..3 {
                        acc[3 * k + c] += v * g[c];
                    }
                }
                let nb = acc.len() - 3;
                for c in 0..3 {
                    acc[nb + c] += g[c];
                }
            }
            acc
        })
        .collect();
    let mut d_shader = vec![0.0; shader.param_count()];
    for r in &rows {
        for (a, b) in d_shader.iter_mut().zip(r) {
            *a += b;
        }
    }
    Ok((d_f, d_shader))
}

/// Shading stage applied between the renderer and the loss.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Shading {
    /// Compare the raw feature image with the target.
    #[default]
    None,
    Identity,
    Diffuse {
        lights: Vec<DirectionalLight>,
    },
    Linear {
        shader: LinearShader,
    },
}

impl Shading {
    pub fn output_dim(&self, feature_dim: usize) -> usize {
        match self {
            Shading::None => feature_dim,
            _ => 3,
        }
    }

    pub fn apply(&self, f: &FeatureImage, camera: &Camera) -> Result<FeatureImage> {
        match self {
            Shading::None => Ok(f.clone()),
            Shading::Identity => shade_identity(f),
            Shading::Diffuse { lights } => shade_diffuse(f, lights),
            Shading::Linear { shader } => {
                let view = shader.view_conditioned.then(|| view_direction_plane(camera));
                shade_linear(f, shader, view.as_ref())
            }
        }
    }

    /// Feature-image gradient, plus the shader parameter gradient for
    /// trainable linear shaders.
    pub fn backward(
        &self,
        f: &FeatureImage,
        camera: &Camera,
        upstream: &FeatureImage,
    ) -> Result<(FeatureImage, Option<Vec<f64>>)> {
        match self {
            Shading::None => {
                f.check_shape(upstream, "upstream")?;
                Ok((upstream.clone(), None))
            }
            Shading::Identity => Ok((shade_identity_backward(f, upstream)?, None)),
            Shading::Diffuse { lights } => Ok((shade_diffuse_backward(f, lights, upstream)?, None)),
            Shading::Linear { shader } => {
                let view = shader.view_conditioned.then(|| view_direction_plane(camera));
                let (df, dp) = shade_linear_backward(f, shader, view.as_ref(), upstream)?;
                Ok((df, shader.trainable.then_some(dp)))
            }
        }
    }

    pub fn trainable_params(&self) -> Option<Vec<f64>> {
        match self {
            Shading::Linear { shader } if shader.trainable => Some(shader.params()),
            _ => None,
        }
    }

    pub fn set_trainable_params(&mut self, v: &[f64]) -> Result<()> {
        match self {
            Shading::Linear { shader } if shader.trainable => shader.set_params(v),
            _ => Err(Error::Config("shading stage has no trainable parameters".into())),
        }
    }
}
