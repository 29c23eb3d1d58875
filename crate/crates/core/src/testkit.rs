//! Reference implementations for tests: a brute-force renderer and central
//! finite differences.
//!
//! The oracle renderer does not use bounds rectangles, sorting, tiles, early
//! termination or top-K truncation. It works in world coordinates and
//! evaluates the blend with its own two-pass formula, so it shares no code
//! path with [`crate::raster`] beyond camera ray generation.

use nalgebra::Vector3;

use crate::blend::BlendParams;
use crate::camera::{Camera, Projection};
use crate::error::{Error, Result};
use crate::imaging::FeatureImage;
use crate::scene::SphereScene;

struct OracleSphere {
    center: Vector3<f64>,
    radius: f64,
    opacity: f64,
    /// `Some(pixel)` when the sphere is drawn only at that pixel.
    subpixel: Option<(u32, u32)>,
}

fn hit(center: &Vector3<f64>, r: f64, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64)> {
    let v = center - origin;
    let along = v.dot(dir);
    if along <= 0.0 {
        return None;
    }
    let dist = (v - dir * along).norm();
    if dist < r {
        Some((along, dist))
    } else {
        None
    }
}

fn classify(scene: &SphereScene, camera: &Camera) -> Vec<OracleSphere> {
    let (w, h) = (camera.width(), camera.height());
    let px_world = camera.sensor_width() / w as f64;
    let rays: Vec<(Vector3<f64>, Vector3<f64>)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            let r = camera.pixel_ray(x, y);
            (r.origin, r.direction)
        })
        .collect();
    scene
        .spheres()
        .iter()
        .map(|s| {
            let mut out = OracleSphere {
                center: s.position,
                radius: s.radius,
                opacity: s.opacity.clamp(0.0, 1.0),
                subpixel: None,
            };
            let rel = s.position - camera.translation();
            let axis_depth = camera.rotation_matrix().column(2).dot(&rel);
            let projectable = match camera.projection() {
                Projection::Pinhole => axis_depth > s.radius,
                Projection::Orthographic => axis_depth > 0.0,
            };
            if !projectable || out.opacity <= 0.0 {
                return out;
            }
            let p = camera.project_point(&s.position).expect("in front of the camera");
            if !(p.u >= 0.0 && p.u < w as f64 && p.v >= 0.0 && p.v < h as f64) {
                return out;
            }
            let (size_px, footprint) = match camera.projection() {
                Projection::Pinhole => (
                    camera.focal_length() * s.radius / rel.norm() / px_world,
                    rel.norm() * px_world / camera.focal_length(),
                ),
                Projection::Orthographic => (s.radius / px_world, px_world),
            };
            if size_px > crate::raster::SUBPIXEL_RADIUS_PX {
                return out;
            }
            if rays.iter().any(|(o, d)| hit(&s.position, s.radius, o, d).is_some()) {
                return out;
            }
            out.subpixel = Some((p.u.floor() as u32, p.v.floor() as u32));
            out.radius = s.radius.max(footprint);
            out
        })
        .collect()
}

/// Renders by testing every sphere against every pixel ray and blending all
/// hits exactly.
pub fn oracle_render(scene: &SphereScene, camera: &Camera, params: &BlendParams) -> FeatureImage {
    let (w, h) = (camera.width(), camera.height());
    let d = scene.feature_dim();
    let gamma = params.gamma.clamp(1e-5, 1.0);
    let (near, far) = (camera.near(), camera.far());
    let spheres = classify(scene, camera);
    let mut img = FeatureImage::new(w, h, d);
    let mut bgw = Vec::with_capacity(w as usize * h as usize);
    let mut hits: Vec<(f64, f64, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let ray = camera.pixel_ray(x, y);
            hits.clear();
            for (i, s) in spheres.iter().enumerate() {
                if s.opacity <= 0.0 {
                    continue;
                }
                if let Some(px) = s.subpixel {
                    if px != (x, y) {
                        continue;
                    }
                }
                if let Some((along, dist)) = hit(&s.center, s.radius, &ray.origin, &ray.direction) {
                    let z = (far - along.clamp(near, far)) / (far - near);
                    hits.push((z, 1.0 - dist / s.radius, i));
                }
            }
            // first pass: largest exponent, second pass: shifted sums
            let bg_exp = params.epsilon / gamma;
            let mut top = bg_exp;
            for &(z, _, i) in &hits {
                top = top.max(spheres[i].opacity * z / gamma);
            }
            let mut den = (bg_exp - top).exp();
            let mut num: Vec<f64> = scene.background().iter().map(|b| b * den).collect();
            for &(z, c, i) in &hits {
                let o = spheres[i].opacity;
                let t = o * c * (o * z / gamma - top).exp();
                den += t;
                for (n, f) in num.iter_mut().zip(&scene.spheres()[i].feature) {
                    *n += t * f;
                }
            }
            for (p, n) in img.pixel_mut(x, y).iter_mut().zip(&num) {
                *p = n / den;
            }
            bgw.push((bg_exp - top).exp() / den);
        }
    }
    img.set_background_weight(Some(bgw)).expect("sized");
    img
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn fd_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Validation {
                index: j,
                reason: format!("non-finite evaluation: f(x+h)={up}, f(x-h)={down}"),
            });
        }
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Central differences of the linear functional `<weights, f(x)>`, taking
/// differences elementwise before summing to limit cancellation.
pub fn fd_gradient_linear<F>(mut f: F, weights: &[f64], x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        if up.len() != weights.len() || down.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "functional has {} weights, evaluation returned {} values",
                weights.len(),
                up.len()
            )));
        }
        if !up.iter().chain(&down).all(|v| v.is_finite()) {
            return Err(Error::Validation {
                index: j,
                reason: "non-finite evaluation".into(),
            });
        }
        let s: f64 = weights
            .iter()
            .zip(up.iter().zip(&down))
            .map(|(g, (a, b))| g * (a - b))
            .sum();
        out.push(s / (2.0 * h));
    }
    Ok(out)
}

/// `|analytic - numeric| <= max(abs_floor, rel * max(|analytic|, |numeric|))`.
pub fn gradients_agree(analytic: f64, numeric: f64, rel: f64, abs_floor: f64) -> bool {
    (analytic - numeric).abs() <= abs_floor.max(rel * analytic.abs().max(numeric.abs()))
}

/// Smallest `|1 - dist / radius|` over all pixel rays and spheres: how close
/// any pixel center comes to a silhouette, relative to the radius. The image
/// has a kink wherever a silhouette crosses a pixel center, so central
/// differences are only meaningful when this margin exceeds the step times
/// the parameter sensitivity.
pub fn silhouette_margin(scene: &SphereScene, camera: &Camera) -> f64 {
    let mut m = f64::INFINITY;
    for y in 0..camera.height() {
        for x in 0..camera.width() {
            let ray = camera.pixel_ray(x, y);
            for s in scene.spheres() {
                m = m.min((1.0 - ray.distance_to(&s.position) / s.radius).abs());
            }
        }
    }
    m
}

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone)]
pub struct GradcheckReport {
    /// Sphere parameters then camera vector, as in [`pack_parameters`].
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Indices failing the tolerance.
    pub failures: Vec<usize>,
    /// Largest `|a - n| / max(|a|, |n|, abs_floor)`.
    pub worst_relative: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks the raw (unnormalized, ungated) backward pass for the loss
/// `<upstream, image>` against [`fd_gradient_linear`] with step `h`.
pub fn gradcheck(
    scene: &SphereScene,
    camera: &Camera,
    params: &BlendParams,
    upstream: &FeatureImage,
    h: f64,
    rel: f64,
    abs_floor: f64,
) -> Result<GradcheckReport> {
    use crate::grad::{render_backward, BackwardOptions};
    use crate::raster::render_forward;

    let out = render_forward(scene, camera, params)?;
    let buffer = out.buffer.as_ref().expect("forward keeps the buffer by default");
    let (g, c) = render_backward(scene, camera, params, buffer, upstream, &BackwardOptions::raw())?;
    let mut analytic = g.to_vector();
    analytic.extend(c.to_vector());
    let x = pack_parameters(scene, camera);
    let mut failed = None;
    let numeric = fd_gradient_linear(
        |p| match unpack_parameters(p, scene, camera).and_then(|(s, cam)| render_forward(&s, &cam, params)) {
            Ok(o) => o.image.into_data(),
            Err(e) => {
                failed.get_or_insert(e);
                vec![f64::NAN; upstream.data().len()]
            }
        },
        upstream.data(),
        &x,
        h,
    );
    if let Some(e) = failed {
        return Err(e);
    }
    let numeric = numeric?;
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for (j, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        if !gradients_agree(*a, *n, rel, abs_floor) {
            failures.push(j);
        }
        worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(abs_floor));
    }
    Ok(GradcheckReport {
        analytic,
        numeric,
        failures,
        worst_relative: worst,
    })
}

/// Flat parameter vector: per sphere `[x, y, z, radius, opacity, feature..]`,
/// followed by the camera vector.
pub fn pack_parameters(scene: &SphereScene, camera: &Camera) -> Vec<f64> {
    let mut v = Vec::new();
    for s in scene.spheres() {
        v.extend(s.position.iter());
        v.push(s.radius);
        v.push(s.opacity);
        v.extend(&s.feature);
    }
    v.extend(camera.to_vector());
    v
}

/// Inverse of [`pack_parameters`], using `scene` and `camera` as templates.
pub fn unpack_parameters(v: &[f64], scene: &SphereScene, camera: &Camera) -> Result<(SphereScene, Camera)> {
    let d = scene.feature_dim();
    let per = 5 + d;
    let cam_len = camera.to_vector().len();
    if v.len() != scene.len() * per + cam_len {
        return Err(Error::Dimension(format!(
            "parameter vector has {} entries, expected {}",
            v.len(),
            scene.len() * per + cam_len
        )));
    }
    let mut out = scene.clone();
    for (s, p) in out.spheres_mut().iter_mut().zip(v.chunks_exact(per)) {
        s.position = Vector3::new(p[0], p[1], p[2]);
        s.radius = p[3];
        s.opacity = p[4];
        s.feature.copy_from_slice(&p[5..]);
    }
    let cam = Camera::from_vector(&v[scene.len() * per..], *camera.sensor())?;
    Ok((out, cam))
}
