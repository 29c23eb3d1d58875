//! Photometric loss and the opacity-depth regularizer.

use crate::camera::Camera;
use crate::error::Result;
use crate::grad::SceneGradients;
use crate::imaging::FeatureImage;
use crate::scene::SphereScene;

/// Mean absolute error and its subgradient `sign(r - t) / N` (0 at ties).
pub fn photometric_loss(rendered: &FeatureImage, target: &FeatureImage) -> Result<(f64, FeatureImage)> {
    rendered.check_shape(target, "target")?;
    let n = rendered.data().len().max(1) as f64;
    let mut grad = FeatureImage::new(rendered.width(), rendered.height(), rendered.feature_dim());
    let mut sum = 0.0;
    for ((g, &r), &t) in grad.data_mut().iter_mut().zip(rendered.data()).zip(target.data()) {
        let diff = r - t;
        sum += diff.abs();
        *g = if diff > 0.0 {
            1.0 / n
        } else if diff < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((sum / n, grad))
}

/// Center depth of every sphere in NDC, with `d z / d q_z` (0 where clamped).
fn center_depths(scene: &SphereScene, camera: &Camera) -> Vec<(f64, f64)> {
    let span = camera.far() - camera.near();
    scene
        .spheres()
        .iter()
        .map(|s| {
            let qz = camera.world_to_camera(&s.position).z;
            let slope = if qz > camera.near() && qz < camera.far() {
                -1.0 / span
            } else {
                0.0
            };
            (camera.ndc_depth(qz), slope)
        })
        .collect()
}

/// Energy `lambda * sum(-z_i * o_i)` and its gradients, added into `grads`.
///
/// `z_i` is the NDC depth of the sphere center along the optical axis and
/// `o_i` the clamped opacity. The opacity derivative follows the renderer's
/// clamp rule (zero below 0, pass-through above 1).
pub fn opacity_depth_regularizer(
    scene: &SphereScene,
    camera: &Camera,
    lambda: f64,
    grads: Option<&mut SceneGradients>,
) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let depths = center_depths(scene, camera);
    let axis = camera.rotation_matrix().column(2).into_owned();
    let energy: f64 = scene
        .spheres()
        .iter()
        .zip(&depths)
        .map(|(s, (z, _))| -lambda * z * s.clamped_opacity())
        .sum();
    if let Some(g) = grads {
        for (i, (s, &(z, slope))) in scene.spheres().iter().zip(&depths).enumerate() {
            let o = s.clamped_opacity();
            g.d_position[i] += axis * (-lambda * o * slope);
            if s.opacity > 0.0 {
                g.d_opacity[i] += -lambda * z;
            }
        }
    }
    energy
}
