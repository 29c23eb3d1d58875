//! Run configuration files (TOML).
//!
//! ```toml
//! seed = 7
//! workers = 2
//! precision = "64"
//!
//! [blend]
//! gamma = 0.1
//! tau = 0.01
//!
//! [camera]
//! vector = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0, 2.0]
//! width = 256
//! height = 256
//!
//! [fit]
//! steps = 1000
//! learning_rates = { position = 0.005 }
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Unknown keys are errors. Every section is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blend::BlendParams;
use crate::camera::{Camera, Projection, Sensor};
use crate::error::{Error, Result};
use crate::optim::FitConfig;
use crate::raster::Precision;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    /// 8 (axis-angle) or 11 (6D) values: translation, rotation, focal length, sensor width.
    pub vector: Vec<f64>,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
    pub projection: Projection,
}

impl Default for CameraConfig {
    fn default() -> Self {
        let s = Sensor::default();
        Self {
            vector: crate::synth::QUICKSTART_CAMERA.to_vec(),
            width: s.width,
            height: s.height,
            near: s.near,
            far: s.far,
            projection: s.projection,
        }
    }
}

impl CameraConfig {
    pub fn sensor(&self) -> Sensor {
        Sensor::new(self.width, self.height)
            .with_depth_range(self.near, self.far)
            .with_projection(self.projection)
    }

    pub fn camera(&self) -> Result<Camera> {
        Camera::from_vector(&self.vector, self.sensor())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write a preview render every this many fit steps; 0 disables previews.
    pub preview_every: usize,
    /// 8 or 16.
    pub bit_depth: u8,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            preview_every: 0,
            bit_depth: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// 0 uses every core.
    pub workers: usize,
    pub precision: Precision,
    pub blend: BlendParams,
    pub camera: CameraConfig,
    pub fit: FitConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    /// Checks every section; called before any compute starts.
    pub fn validate(&self) -> Result<()> {
        self.blend.validate()?;
        self.camera.camera()?;
        self.fit.validate()?;
        if !matches!(self.output.bit_depth, 8 | 16) {
            return Err(Error::Config(format!(
                "bit_depth must be 8 or 16, got {}",
                self.output.bit_depth
            )));
        }
        Ok(())
    }
}
