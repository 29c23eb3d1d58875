//! Sphere scenes: storage, validation, serialization and point-cloud ingestion.
//!
//! A scene is an array of spheres, each carrying a position, a radius, an
//! opacity and a `feature_dim`-sized payload. Opacity is stored unconstrained;
//! the renderer clamps it to `[0, 1]`.

mod ply;
mod psc;

pub use ply::{import_point_cloud, parse_point_cloud, PointCloudImport};
pub use psc::{load_scene, read_scene, save_scene, write_scene, PSC_MAGIC};

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Smallest radius the optimizer may leave behind.
pub const DEFAULT_RADIUS_MIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Sphere {
    pub position: Vector3<f64>,
    pub radius: f64,
    /// Unconstrained; clamped to `[0, 1]` when rendering.
    pub opacity: f64,
    pub feature: Vec<f64>,
}

impl Sphere {
    pub fn new(position: Vector3<f64>, radius: f64, opacity: f64, feature: Vec<f64>) -> Self {
        Self {
            position,
            radius,
            opacity,
            feature,
        }
    }

    /// Opacity as seen by the blending function.
    pub fn clamped_opacity(&self) -> f64 {
        self.opacity.clamp(0.0, 1.0)
    }

    fn check(&self, feature_dim: usize) -> std::result::Result<(), String> {
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err("non-finite position".into());
        }
        if !self.radius.is_finite() || self.radius <= 0.0 {
            return Err(format!("radius must be finite and > 0, got {}", self.radius));
        }
        if !self.opacity.is_finite() {
            return Err("non-finite opacity".into());
        }
        if self.feature.len() != feature_dim {
            return Err(format!(
                "feature has {} channels, scene expects {}",
                self.feature.len(),
                feature_dim
            ));
        }
        if !self.feature.iter().all(|v| v.is_finite()) {
            return Err("non-finite feature value".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereScene {
    spheres: Vec<Sphere>,
    feature_dim: usize,
    background: Vec<f64>,
}

impl SphereScene {
    /// Creates an empty scene whose background feature is `background`.
    pub fn new(feature_dim: usize, background: Vec<f64>) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::Config("feature_dim must be at least 1".into()));
        }
        if background.len() != feature_dim {
            return Err(Error::Config(format!(
                "background has {} channels, feature_dim is {}",
                background.len(),
                feature_dim
            )));
        }
        if !background.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("background feature must be finite".into()));
        }
        Ok(Self {
            spheres: Vec::new(),
            feature_dim,
            background,
        })
    }

    /// Appends spheres in order. Either all spheres are added or none.
    pub fn add_spheres<I>(&mut self, spheres: I) -> Result<()>
    where
        I: IntoIterator<Item = Sphere>,
    {
        let incoming: Vec<Sphere> = spheres.into_iter().collect();
        for (i, s) in incoming.iter().enumerate() {
            s.check(self.feature_dim).map_err(|reason| Error::Validation {
                index: self.spheres.len() + i,
                reason,
            })?;
        }
        self.spheres.extend(incoming);
        Ok(())
    }

    pub fn push(&mut self, sphere: Sphere) -> Result<()> {
        self.add_spheres(std::iter::once(sphere))
    }

    pub fn spheres(&self) -> &[Sphere] {
        &self.spheres
    }

    /// Mutable access for optimizers. Call [`SphereScene::validate`] before
    /// rendering if values may have become invalid.
    pub fn spheres_mut(&mut self) -> &mut [Sphere] {
        &mut self.spheres
    }

    pub fn len(&self) -> usize {
        self.spheres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spheres.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn background(&self) -> &[f64] {
        &self.background
    }

    pub fn set_background(&mut self, background: Vec<f64>) -> Result<()> {
        if background.len() != self.feature_dim {
            return Err(Error::Dimension(format!(
                "background has {} channels, feature_dim is {}",
                background.len(),
                self.feature_dim
            )));
        }
        self.background = background;
        Ok(())
    }

    /// Keeps the spheres for which `keep(index, sphere)` returns true.
    pub fn retain_indexed<F>(&mut self, mut keep: F)
    where
        F: FnMut(usize, &Sphere) -> bool,
    {
        let mut i = 0;
        self.spheres.retain(|s| {
            let k = keep(i, s);
            i += 1;
            k
        });
    }

    /// Replaces the sphere list wholesale, validating the new content.
    pub fn replace_spheres(&mut self, spheres: Vec<Sphere>) -> Result<()> {
        for (i, s) in spheres.iter().enumerate() {
            s.check(self.feature_dim)
                .map_err(|reason| Error::Validation { index: i, reason })?;
        }
        self.spheres = spheres;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.background.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("background feature must be finite".into()));
        }
        for (index, s) in self.spheres.iter().enumerate() {
            s.check(self.feature_dim)
                .map_err(|reason| Error::Validation { index, reason })?;
        }
        Ok(())
    }

    /// Rounds every stored value to the nearest `f32`, the precision of the
    /// scene file format.
    pub fn quantize_f32(&mut self) {
        let q = |v: &mut f64| *v = *v as f32 as f64;
        for s in &mut self.spheres {
            s.position.iter_mut().for_each(q);
            q(&mut s.radius);
            q(&mut s.opacity);
            s.feature.iter_mut().for_each(q);
        }
        self.background.iter_mut().for_each(q);
    }

    /// Projects every radius onto `[radius_min, inf)`.
    pub fn clamp_radii(&mut self, radius_min: f64) {
        for s in &mut self.spheres {
            if s.radius < radius_min || s.radius.is_nan() {
                s.radius = radius_min;
            }
        }
    }
}
