//! Synthetic scenes and camera rigs for examples, tests and benchmarks.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{Camera, Sensor};
use crate::error::{Error, Result};
use crate::scene::{Sphere, SphereScene};

/// Camera vector of the ten-sphere quick-start scene: origin, no rotation,
/// focal length 5, sensor width 2.
pub const QUICKSTART_CAMERA: [f64; 8] = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0, 2.0];

pub fn quickstart_camera(width: u32, height: u32) -> Camera {
    Camera::from_vector(
        &QUICKSTART_CAMERA,
        Sensor::new(width, height).with_depth_range(0.1, 45.0),
    )
    .expect("valid camera")
}

/// `n` random RGB spheres with positions in `[-5, 5]^2 x [25, 35]` and radii
/// in `(0, 1)`, in front of [`quickstart_camera`].
pub fn random_scene(n: usize, seed: u64) -> SphereScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = SphereScene::new(3, vec![0.0; 3]).expect("valid background");
    let spheres: Vec<Sphere> = (0..n)
        .map(|_| {
            let p = Vector3::new(
                rng.random::<f64>() * 10.0 - 5.0,
                rng.random::<f64>() * 10.0 - 5.0,
                rng.random::<f64>() * 10.0 + 25.0,
            );
            let col = vec![rng.random(), rng.random(), rng.random()];
            let r = rng.random::<f64>().max(1e-3);
            Sphere::new(p, r, 1.0, col)
        })
        .collect();
    scene.add_spheres(spheres).expect("valid spheres");
    scene
}

/// Random point inside the view frustum of `camera` at axis depth `depth`.
fn frustum_point(camera: &Camera, rng: &mut ChaCha8Rng, depth: f64) -> Vector3<f64> {
    let u = rng.random::<f64>() * camera.width() as f64;
    let v = rng.random::<f64>() * camera.height() as f64;
    let (o, d) = camera.camera_ray(u, v);
    let q = o + d * ((depth - o.z) / d.z);
    camera.camera_to_world(&q)
}

/// Fills the frustum of `camera` between axis depths `near` and `far`
/// uniformly with `count` spheres whose radius grows linearly with depth,
/// `radius_per_depth * depth`, with random features in `[0, 1)`.
pub fn fill_volume(
    camera: &Camera,
    count: usize,
    near: f64,
    far: f64,
    radius_per_depth: f64,
    feature_dim: usize,
    seed: u64,
) -> Result<SphereScene> {
    if !(near > 0.0 && far > near) || !(radius_per_depth > 0.0) {
        return Err(Error::Config(
            "volume fill needs 0 < near < far and a positive radius factor".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = SphereScene::new(feature_dim, vec![0.0; feature_dim])?;
    let spheres: Vec<Sphere> = (0..count)
        .map(|_| {
            let depth = near + rng.random::<f64>() * (far - near);
            let p = frustum_point(camera, &mut rng, depth);
            let f: Vec<f64> = (0..feature_dim).map(|_| rng.random()).collect();
            Sphere::new(p, radius_per_depth * depth, 0.5, f)
        })
        .collect();
    scene.add_spheres(spheres)?;
    Ok(scene)
}

/// One large opaque sphere covering the whole view of `camera` at axis
/// depth 12, followed by `hidden` small spheres between depths 25 and 40
/// that it fully occludes.
pub fn occluded_scene(camera: &Camera, hidden: usize, seed: u64) -> SphereScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = SphereScene::new(3, vec![0.0; 3]).expect("valid background");
    let front = camera.camera_to_world(&Vector3::new(0.0, 0.0, 12.0));
    let mut spheres = vec![Sphere::new(front, 6.0, 1.0, vec![0.9, 0.8, 0.7])];
    spheres.extend((0..hidden).map(|_| {
        let depth = 25.0 + rng.random::<f64>() * 15.0;
        let p = frustum_point(camera, &mut rng, depth);
        Sphere::new(
            p,
            0.05 + 0.25 * rng.random::<f64>(),
            1.0,
            vec![rng.random(), rng.random(), rng.random()],
        )
    }));
    scene.add_spheres(spheres).expect("valid spheres");
    scene
}

/// `count` spheres that all cover the central region of `camera`'s view,
/// spread over axis depths 8 to 40, with random opacities and features.
pub fn stacked_scene(camera: &Camera, count: usize, feature_dim: usize, seed: u64) -> SphereScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = SphereScene::new(feature_dim, vec![0.05; feature_dim]).expect("valid background");
    let spheres: Vec<Sphere> = (0..count)
        .map(|i| {
            let depth = 8.0 + 32.0 * (i as f64 + rng.random::<f64>()) / count as f64;
            let jitter = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 0.0);
            let p = camera.camera_to_world(&(Vector3::new(0.0, 0.0, depth) + jitter));
            let f: Vec<f64> = (0..feature_dim).map(|_| rng.random()).collect();
            Sphere::new(p, 0.25 * depth + 1.0, rng.random_range(0.3..1.0), f)
        })
        .collect();
    scene.add_spheres(spheres).expect("valid spheres");
    scene
}

/// `count` view directions spread evenly over the unit sphere (Fibonacci
/// lattice).
pub fn sphere_directions(count: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), y, r * phi.sin())
        })
        .collect()
}

/// Cameras at `distance` from `target` looking at it from `count` directions
/// spread over the sphere.
pub fn orbit_cameras(
    count: usize,
    target: Vector3<f64>,
    distance: f64,
    focal_length: f64,
    sensor_width: f64,
    sensor: Sensor,
) -> Result<Vec<Camera>> {
    sphere_directions(count)
        .into_iter()
        .map(|d| {
            let up = if d.y.abs() > 0.99 { Vector3::z() } else { Vector3::y() };
            Camera::look_at(target + d * distance, target, up, focal_length, sensor_width, sensor)
        })
        .collect()
}

/// `rings * segments` points on a latitude/longitude grid over a sphere of
/// `radius` around `center`, excluding the poles.
pub fn lat_long_points(center: Vector3<f64>, radius: f64, rings: usize, segments: usize) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(rings * segments);
    for i in 0..rings {
        let theta = std::f64::consts::PI * (i as f64 + 0.5) / rings as f64;
        for j in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / segments as f64;
            out.push(center + radius * Vector3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin()));
        }
    }
    out
}

/// Silhouette scene (`d = 1`, feature 1, background 0) with spheres of
/// `sphere_radius` at `points`.
pub fn silhouette_scene(points: &[Vector3<f64>], sphere_radius: f64, opacity: f64) -> SphereScene {
    let mut scene = SphereScene::new(1, vec![0.0]).expect("valid background");
    scene
        .add_spheres(
            points
                .iter()
                .map(|p| Sphere::new(*p, sphere_radius, opacity, vec![1.0])),
        )
        .expect("valid spheres");
    scene
}

/// Points filling a flattened ellipsoid body with a bar sticking out along
/// +x, inside a ball of radius 2. Used as a silhouette-fitting target.
pub fn blob_points(spacing: f64) -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    let n = (2.0 / spacing).ceil() as i64;
    for i in -n..=n {
        for j in -n..=n {
            for k in -n..=n {
                let p = Vector3::new(i as f64, j as f64, k as f64) * spacing;
                let body = (p.x / 1.4).powi(2) + (p.y / 0.9).powi(2) + (p.z / 1.1).powi(2) <= 1.0;
                let bar = p.x > 0.0 && p.x < 1.7 && p.y.abs() < 0.35 && p.z.abs() < 0.35;
                if body || bar {
                    out.push(p);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blend::BlendParams;
    use crate::raster::render_forward;

    #[test]
    fn random_scene_is_seeded_and_in_view() {
        let a = random_scene(10, 1);
        assert_eq!(a, random_scene(10, 1));
        assert_ne!(a, random_scene(10, 2));
        let cam = quickstart_camera(64, 64);
        for s in a.spheres() {
            let p = cam.project_point(&s.position).unwrap();
            assert!(p.u >= 0.0 && p.u <= 64.0 && p.v >= 0.0 && p.v <= 64.0);
        }
    }

    #[test]
    fn occluder_covers_the_view() {
        let cam = quickstart_camera(32, 32);
        let s = occluded_scene(&cam, 50, 3);
        let out = render_forward(&s, &cam, &BlendParams::default().with_gamma(0.05)).unwrap();
        let front = [0.9, 0.8, 0.7];
        for px in out.image.data().chunks(3) {
            for c in 0..3 {
                assert!((px[c] - front[c]).abs() < 0.02, "{px:?}");
            }
        }
    }

    #[test]
    fn volume_radii_grow_with_depth() {
        let cam = quickstart_camera(32, 32);
        let s = fill_volume(&cam, 200, 5.0, 40.0, 0.01, 2, 9).unwrap();
        for sp in s.spheres() {
            let depth = cam.world_to_camera(&sp.position).z;
            assert!((sp.radius - 0.01 * depth).abs() < 1e-9);
            assert!((5.0..=40.0).contains(&depth));
        }
        assert!(fill_volume(&cam, 1, 5.0, 4.0, 0.01, 1, 0).is_err());
    }

    #[test]
    fn orbit_cameras_look_at_target() {
        let cams = orbit_cameras(12, Vector3::new(1.0, 2.0, 3.0), 8.0, 5.0, 2.0, Sensor::new(16, 16)).unwrap();
        for c in &cams {
            let p = c.project_point(&Vector3::new(1.0, 2.0, 3.0)).unwrap();
            assert!((p.u - 8.0).abs() < 1e-9 && (p.v - 8.0).abs() < 1e-9);
            assert!((p.depth - 8.0).abs() < 1e-9);
        }
    }

    #[test]
    fn lat_long_grid_size() {
        let pts = lat_long_points(Vector3::zeros(), 2.0, 26, 52);
        assert_eq!(pts.len(), 1352);
        assert!(pts.iter().all(|p| (p.norm() - 2.0).abs() < 1e-12));
    }
}
