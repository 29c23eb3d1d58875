//! Fit checkpoints: a `PSC1` scene followed by a JSON trailer.
//!
//! ```text
//! "PSCK"              4 bytes
//! version             u32 LE
//! scene length        u64 LE
//! PSC1 scene          scene length bytes
//! JSON trailer        rest of file
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fit::{FitConfig, OptimizerState};
use crate::camera::{Camera, Sensor};
use crate::error::{Error, Result};
use crate::scene::{read_scene, write_scene, SphereScene};
use crate::shade::Shading;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Trailer {
    step: usize,
    cameras: Vec<CameraEntry>,
    shading: Shading,
    optimizer: OptimizerState,
    config: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CameraEntry {
    vector: Vec<f64>,
    sensor: Sensor,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub step: usize,
    /// Stored at `f32` precision.
    pub scene: SphereScene,
    pub cameras: Vec<Camera>,
    pub shading: Shading,
    pub optimizer: OptimizerState,
    pub config: FitConfig,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut scene = Vec::new();
        write_scene(&self.scene, &mut scene)?;
        let trailer = Trailer {
            step: self.step,
            cameras: self
                .cameras
                .iter()
                .map(|c| CameraEntry {
                    vector: c.to_vector(),
                    sensor: *c.sensor(),
                })
                .collect(),
            shading: self.shading.clone(),
            optimizer: self.optimizer.clone(),
            config: self.config.clone(),
        };
        let json = serde_json::to_vec(&trailer).map_err(|e| Error::Format(format!("checkpoint trailer: {e}")))?;
        let mut out = Vec::with_capacity(16 + scene.len() + json.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(scene.len() as u64).to_le_bytes());
        out.extend_from_slice(&scene);
        out.extend_from_slice(&json);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let end = usize::try_from(len)
            .ok()
            .and_then(|l| l.checked_add(16))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Format("checkpoint scene section is truncated".into()))?;
        let scene = read_scene(&mut &bytes[16..end])?;
        let t: Trailer =
            serde_json::from_slice(&bytes[end..]).map_err(|e| Error::Format(format!("checkpoint trailer: {e}")))?;
        let cameras = t
            .cameras
            .iter()
            .map(|c| Camera::from_vector(&c.vector, c.sensor))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            step: t.step,
            scene,
            cameras,
            shading: t.shading,
            optimizer: t.optimizer,
            config: t.config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
