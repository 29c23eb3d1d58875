//! `PSC1` binary scene files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "PSC1"                      4 bytes
//! feature_dim                 u32
//! sphere count                u64
//! background                  feature_dim x f32
//! spheres                     count x (x, y, z, radius, opacity, feature_dim x f32)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::{Sphere, SphereScene};
use crate::error::{Error, Result};

pub const PSC_MAGIC: &[u8; 4] = b"PSC1";

pub fn save_scene(scene: &SphereScene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_scene(scene, &mut w).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SphereScene> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_scene(&mut BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

fn to_f32(v: f64, what: &str) -> Result<f32> {
    let x = v as f32;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Format(format!("{what} value {v} is not representable as f32")))
    }
}

pub fn write_scene<W: Write>(scene: &SphereScene, w: &mut W) -> Result<()> {
    let d = scene.feature_dim();
    let mut buf = Vec::with_capacity(16 + 4 * d + scene.len() * 4 * (5 + d));
    buf.extend_from_slice(PSC_MAGIC);
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    buf.extend_from_slice(&(scene.len() as u64).to_le_bytes());
    for &b in scene.background() {
        buf.extend_from_slice(&to_f32(b, "background")?.to_le_bytes());
    }
    for s in scene.spheres() {
        for v in s
            .position
            .iter()
            .chain([s.radius, s.opacity].iter())
            .chain(s.feature.iter())
        {
            buf.extend_from_slice(&to_f32(*v, "sphere")?.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| Error::io("<writer>", e))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format(format!("truncated scene file while reading {what}"))
        } else {
            Error::io("<reader>", e)
        }
    })
}

fn read_f32s<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<f64>> {
    let mut raw = vec![0u8; 4 * n];
    read_exact(r, &mut raw, what)?;
    Ok(raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub fn read_scene<R: Read>(r: &mut R) -> Result<SphereScene> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if &magic != PSC_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            "PSC1"
        )));
    }
    let mut b4 = [0u8; 4];
    read_exact(r, &mut b4, "feature_dim")?;
    let d = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    read_exact(r, &mut b8, "sphere count")?;
    let count = u64::from_le_bytes(b8);
    if d == 0 {
        return Err(Error::Format("feature_dim is zero".into()));
    }
    let background = read_f32s(r, d, "background")?;
    let mut scene = SphereScene::new(d, background)?;

    let record = 5 + d;
    let mut spheres = Vec::new();
    for _ in 0..count {
        let v = read_f32s(r, record, "sphere record")?;
        spheres.push(Sphere::new(Vector3::new(v[0], v[1], v[2]), v[3], v[4], v[5..].to_vec()));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io("<reader>", e))? != 0 {
        return Err(Error::Format("trailing bytes after last sphere record".into()));
    }
    scene.add_spheres(spheres)?;
    Ok(scene)
}
