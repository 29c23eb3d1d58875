//! Scene refinement between optimization epochs: pruning and FCC subdivision.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Sphere, SphereScene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneConfig {
    /// Spheres whose clamped opacity is below this are removed.
    pub opacity_min: f64,
    /// Spheres whose feature lies within this Euclidean distance of the
    /// background feature are removed. 0 disables the test.
    pub background_distance: f64,
    /// Remove spheres that covered no pixel in any view during the epoch.
    pub remove_invisible: bool,
    /// Prune after every this many epochs. 0 disables pruning in `fit`.
    pub every_epochs: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            opacity_min: 0.01,
            background_distance: 0.0,
            remove_invisible: true,
            every_epochs: 0,
        }
    }
}

/// Why a sphere was pruned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneReason {
    Transparent,
    Background,
    Invisible,
}

/// Per-sphere decision of [`prune`]: `None` keeps the sphere.
pub fn prune_decisions(
    scene: &SphereScene,
    pixel_counts: &[u64],
    cfg: &PruneConfig,
) -> Result<Vec<Option<PruneReason>>> {
    if pixel_counts.len() != scene.len() {
        return Err(Error::Dimension(format!(
            "{} pixel counts for {} spheres",
            pixel_counts.len(),
            scene.len()
        )));
    }
    let bg = scene.background();
    Ok(scene
        .spheres()
        .iter()
        .zip(pixel_counts)
        .map(|(s, &n)| {
            if s.clamped_opacity() < cfg.opacity_min {
                return Some(PruneReason::Transparent);
            }
            if cfg.background_distance > 0.0 {
                let d2: f64 = s.feature.iter().zip(bg).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2.sqrt() < cfg.background_distance {
                    return Some(PruneReason::Background);
                }
            }
            if cfg.remove_invisible && n == 0 {
                return Some(PruneReason::Invisible);
            }
            None
        })
        .collect())
}

/// Removes transparent, background-colored and never-visible spheres.
///
/// `pixel_counts[i]` is the number of pixels sphere `i` contributed to,
/// summed over all training views of an epoch. Returns the keep mask.
pub fn prune(scene: &mut SphereScene, pixel_counts: &[u64], cfg: &PruneConfig) -> Result<Vec<bool>> {
    let keep: Vec<bool> = prune_decisions(scene, pixel_counts, cfg)?
        .iter()
        .map(Option::is_none)
        .collect();
    scene.retain_indexed(|i, _| keep[i]);
    Ok(keep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubdivideConfig {
    /// Child radius as a multiple of the parent radius.
    pub radius_scale: f64,
    /// Steps after which every sphere is subdivided.
    pub at_steps: Vec<usize>,
}

impl Default for SubdivideConfig {
    fn default() -> Self {
        Self {
            radius_scale: std::f64::consts::SQRT_2,
            at_steps: Vec::new(),
        }
    }
}

/// The 12 nearest-neighbor directions of a face-centered cubic lattice,
/// unscaled (length sqrt 2).
pub const FCC_OFFSETS: [[f64; 3]; 12] = [
    [1.0, 1.0, 0.0],
    [1.0, -1.0, 0.0],
    [-1.0, 1.0, 0.0],
    [-1.0, -1.0, 0.0],
    [1.0, 0.0, 1.0],
    [1.0, 0.0, -1.0],
    [-1.0, 0.0, 1.0],
    [-1.0, 0.0, -1.0],
    [0.0, 1.0, 1.0],
    [0.0, 1.0, -1.0],
    [0.0, -1.0, 1.0],
    [0.0, -1.0, -1.0],
];

/// Twelve children of `parent` at the FCC offsets scaled by `a = r / sqrt 2`
/// (so each child center is at distance `r` from the parent center), with
/// radius `radius_scale * r`, inheriting opacity and feature.
pub fn subdivide_sphere(parent: &Sphere, radius_scale: f64) -> [Sphere; 12] {
    let a = parent.radius / std::f64::consts::SQRT_2;
    FCC_OFFSETS.map(|o| {
        Sphere::new(
            parent.position + Vector3::new(o[0], o[1], o[2]) * a,
            radius_scale * parent.radius,
            parent.opacity,
            parent.feature.clone(),
        )
    })
}

/// Replaces every sphere by its 12 FCC children, in scene order.
pub fn subdivide(scene: &mut SphereScene, radius_scale: f64) -> Result<()> {
    if !(radius_scale > 0.0) || !radius_scale.is_finite() {
        return Err(Error::Config(format!(
            "subdivision radius scale must be > 0, got {radius_scale}"
        )));
    }
    let children: Vec<Sphere> = scene
        .spheres()
        .iter()
        .flat_map(|s| subdivide_sphere(s, radius_scale))
        .collect();
    scene.replace_spheres(children)
}
