//! Cameras: extrinsics, pinhole and orthographic projection, NDC depth and
//! per-pixel rays.
//!
//! Conventions: the camera looks along its local `+z` axis, local `+x` maps to
//! increasing pixel column `u` and local `+y` to increasing pixel row `v`.
//! World points map to the camera frame as `q = R^T (p - t)`, so `t` is the
//! camera center and the columns of `R` are the camera axes in world
//! coordinates. The principal point sits at the image center and pixels are
//! square with side `sensor_width / width`.

pub mod rotation;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use rotation::{axis_angle_matrix, sixd_matrix};

/// Bounds stored as 16-bit pixel indices limit the image size.
pub const MAX_IMAGE_SIDE: u32 = u16::MAX as u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    #[default]
    Pinhole,
    Orthographic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rotation {
    /// Rotation vector: axis scaled by the angle in radians.
    AxisAngle(Vector3<f64>),
    /// Two 3-vectors, orthonormalized by Gram-Schmidt.
    SixD([f64; 6]),
}

impl Rotation {
    pub fn identity_6d() -> Self {
        Rotation::SixD([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }

    pub fn param_count(&self) -> usize {
        match self {
            Rotation::AxisAngle(_) => 3,
            Rotation::SixD(_) => 6,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Rotation::AxisAngle(w) => w.iter().copied().collect(),
            Rotation::SixD(a) => a.to_vec(),
        }
    }

    pub fn matrix(&self) -> Result<Matrix3<f64>> {
        match self {
            Rotation::AxisAngle(w) => {
                if !w.iter().all(|v| v.is_finite()) {
                    return Err(Error::Config("non-finite axis-angle rotation".into()));
                }
                Ok(axis_angle_matrix(w))
            }
            Rotation::SixD(a) => sixd_matrix(a),
        }
    }

    /// Chains dL/dR into the rotation parameters.
    pub fn backward(&self, grad_matrix: &Matrix3<f64>) -> Vec<f64> {
        match self {
            Rotation::AxisAngle(w) => rotation::axis_angle_backward(w, grad_matrix).iter().copied().collect(),
            Rotation::SixD(a) => rotation::sixd_backward(a, grad_matrix).to_vec(),
        }
    }
}

/// Image geometry and depth range; everything not carried by a camera vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
    pub projection: Projection,
}

impl Sensor {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            ..Self::default()
        }
    }

    pub fn with_depth_range(mut self, near: f64, far: f64) -> Self {
        self.near = near;
        self.far = far;
        self
    }

    pub fn with_projection(mut self, projection: Projection) -> Self {
        self.projection = projection;
        self
    }
}

impl Default for Sensor {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            near: 0.1,
            far: 45.0,
            projection: Projection::Pinhole,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Unit length.
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn distance_to(&self, p: &Vector3<f64>) -> f64 {
        let v = p - self.origin;
        (v - self.direction * v.dot(&self.direction)).norm()
    }
}

/// A point projected to continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub u: f64,
    pub v: f64,
    /// Depth along the optical axis.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    translation: Vector3<f64>,
    rotation: Rotation,
    matrix: Matrix3<f64>,
    focal_length: f64,
    sensor_width: f64,
    sensor: Sensor,
}

impl Camera {
    pub fn new(
        translation: Vector3<f64>,
        rotation: Rotation,
        focal_length: f64,
        sensor_width: f64,
        sensor: Sensor,
    ) -> Result<Self> {
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("non-finite camera translation".into()));
        }
        if !(focal_length.is_finite() && focal_length > 0.0) {
            return Err(Error::Config(format!("focal length must be > 0, got {focal_length}")));
        }
        if !(sensor_width.is_finite() && sensor_width > 0.0) {
            return Err(Error::Config(format!("sensor width must be > 0, got {sensor_width}")));
        }
        if sensor.width == 0 || sensor.height == 0 {
            return Err(Error::Config("image must have at least one pixel".into()));
        }
        if sensor.width > MAX_IMAGE_SIDE || sensor.height > MAX_IMAGE_SIDE {
            return Err(Error::Config(format!(
                "image sides are limited to {MAX_IMAGE_SIDE} pixels"
            )));
        }
        if !(sensor.near.is_finite() && sensor.far.is_finite() && sensor.near >= 0.0) {
            return Err(Error::Config("near/far must be finite and near >= 0".into()));
        }
        if !(sensor.far - sensor.near > 0.0) {
            return Err(Error::Config(format!(
                "near ({}) must be smaller than far ({})",
                sensor.near, sensor.far
            )));
        }
        let matrix = rotation.matrix()?;
        Ok(Self {
            translation,
            rotation,
            matrix,
            focal_length,
            sensor_width,
            sensor,
        })
    }

    /// Builds a camera from `[t(3), axis-angle(3), f, s]` (8 values) or
    /// `[t(3), 6D rotation(6), f, s]` (11 values).
    pub fn from_vector(v: &[f64], sensor: Sensor) -> Result<Self> {
        let t = |v: &[f64]| Vector3::new(v[0], v[1], v[2]);
        match v.len() {
            8 => Self::new(t(v), Rotation::AxisAngle(t(&v[3..6])), v[6], v[7], sensor),
            11 => {
                let mut a = [0.0; 6];
                a.copy_from_slice(&v[3..9]);
                Self::new(t(v), Rotation::SixD(a), v[9], v[10], sensor)
            }
            n => Err(Error::Config(format!(
                "camera vector must have 8 or 11 entries, got {n}"
            ))),
        }
    }

    /// Inverse of [`Camera::from_vector`].
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.translation.iter().copied().collect();
        v.extend(self.rotation.params());
        v.push(self.focal_length);
        v.push(self.sensor_width);
        v
    }

    /// Camera at the origin looking down `+z`.
    pub fn looking_down_z(focal_length: f64, sensor_width: f64, sensor: Sensor) -> Result<Self> {
        Self::new(
            Vector3::zeros(),
            Rotation::AxisAngle(Vector3::zeros()),
            focal_length,
            sensor_width,
            sensor,
        )
    }

    /// Camera at `eye` looking at `target`; `up` hints at the image's negative
    /// row direction.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal_length: f64,
        sensor_width: f64,
        sensor: Sensor,
    ) -> Result<Self> {
        let z = (target - eye).normalize();
        let x = z.cross(&-up);
        if x.norm() < 1e-9 {
            return Err(Error::Config("look_at: up is parallel to the view direction".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        Self::new(
            eye,
            Rotation::SixD([x.x, x.y, x.z, y.x, y.y, y.z]),
            focal_length,
            sensor_width,
            sensor,
        )
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    /// Orthonormal matrix whose columns are the camera axes in world space.
    pub fn rotation_matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn focal_length(&self) -> f64 {
        self.focal_length
    }

    pub fn sensor_width(&self) -> f64 {
        self.sensor_width
    }

    pub fn sensor(&self) -> &Sensor {
        &self.sensor
    }

    pub fn width(&self) -> u32 {
        self.sensor.width
    }

    pub fn height(&self) -> u32 {
        self.sensor.height
    }

    pub fn near(&self) -> f64 {
        self.sensor.near
    }

    pub fn far(&self) -> f64 {
        self.sensor.far
    }

    pub fn projection(&self) -> Projection {
        self.sensor.projection
    }

    /// Pixels per world unit on the sensor plane.
    pub fn pixel_scale(&self) -> f64 {
        self.sensor.width as f64 / self.sensor_width
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.matrix.tr_mul(&(p - self.translation))
    }

    pub fn camera_to_world(&self, q: &Vector3<f64>) -> Vector3<f64> {
        self.matrix * q + self.translation
    }

    /// Sensor-plane coordinates of continuous pixel position `(u, v)`.
    pub fn sensor_point(&self, u: f64, v: f64) -> (f64, f64) {
        let k = self.sensor_width / self.sensor.width as f64;
        (
            (u - 0.5 * self.sensor.width as f64) * k,
            (v - 0.5 * self.sensor.height as f64) * k,
        )
    }

    /// Ray through continuous pixel position `(u, v)` in camera coordinates.
    pub fn camera_ray(&self, u: f64, v: f64) -> (Vector3<f64>, Vector3<f64>) {
        let (xs, ys) = self.sensor_point(u, v);
        match self.sensor.projection {
            Projection::Pinhole => (Vector3::zeros(), Vector3::new(xs, ys, self.focal_length).normalize()),
            Projection::Orthographic => (Vector3::new(xs, ys, 0.0), Vector3::z()),
        }
    }

    /// World-space ray through continuous pixel position `(u, v)`.
    pub fn ray_through(&self, u: f64, v: f64) -> Ray {
        let (o, d) = self.camera_ray(u, v);
        Ray {
            origin: self.camera_to_world(&o),
            direction: self.matrix * d,
        }
    }

    /// Ray through the center of pixel `(px, py)`.
    pub fn pixel_ray(&self, px: u32, py: u32) -> Ray {
        self.ray_through(px as f64 + 0.5, py as f64 + 0.5)
    }

    /// Maps metric depth to `[0, 1]`, 1 at the near plane and 0 at the far
    /// plane. Input is clamped into `[near, far]`.
    pub fn ndc_depth(&self, metric_depth: f64) -> f64 {
        ndc_depth(metric_depth, self.sensor.near, self.sensor.far)
    }

    /// Projects a world point to continuous pixel coordinates. Pinhole points
    /// at or behind the camera plane yield `None`.
    pub fn project_point(&self, p: &Vector3<f64>) -> Option<Projected> {
        let q = self.world_to_camera(p);
        self.project_camera_point(&q)
    }

    pub fn project_camera_point(&self, q: &Vector3<f64>) -> Option<Projected> {
        let k = self.pixel_scale();
        let (cx, cy) = (0.5 * self.sensor.width as f64, 0.5 * self.sensor.height as f64);
        match self.sensor.projection {
            Projection::Pinhole => {
                if q.z <= 0.0 {
                    return None;
                }
                let s = self.focal_length / q.z * k;
                Some(Projected {
                    u: cx + q.x * s,
                    v: cy + q.y * s,
                    depth: q.z,
                })
            }
            Projection::Orthographic => Some(Projected {
                u: cx + q.x * k,
                v: cy + q.y * k,
                depth: q.z,
            }),
        }
    }
}

/// `(far - clamp(depth)) / (far - near)`.
pub fn ndc_depth(metric_depth: f64, near: f64, far: f64) -> f64 {
    let d = metric_depth.clamp(near, far);
    (far - d) / (far - near)
}
