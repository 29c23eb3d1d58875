//! Analytic gradients against central finite differences of the renderer.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softsphere::camera::{Projection, Sensor};
use softsphere::testkit::{gradcheck, silhouette_margin};
use softsphere::{BlendParams, Camera, FeatureImage, Sphere, SphereScene};

fn random_case(seed: u64, projection: Projection, sixd: bool) -> (SphereScene, Camera, BlendParams, FeatureImage) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 3;
    let mut scene = SphereScene::new(d, vec![0.2, 0.3, 0.1]).unwrap();
    let m = rng.random_range(1..=8);
    for _ in 0..m {
        let pos = Vector3::new(
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.5..1.5),
            rng.random_range(14.0..22.0),
        );
        let feat = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        scene
            .push(Sphere::new(
                pos,
                rng.random_range(0.8..2.0),
                rng.random_range(0.2..0.95),
                feat,
            ))
            .unwrap();
    }
    let mut v = vec![
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.5..0.5),
    ];
    if sixd {
        v.extend([
            1.0,
            rng.random_range(-0.05..0.05),
            0.02,
            rng.random_range(-0.05..0.05),
            1.0,
            -0.03,
        ]);
    } else {
        v.extend([
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.2..0.2),
        ]);
    }
    v.extend([5.0, if projection == Projection::Pinhole { 2.0 } else { 8.0 }]);
    let sensor = Sensor::new(24, 24)
        .with_depth_range(0.1, 45.0)
        .with_projection(projection);
    let camera = Camera::from_vector(&v, sensor).unwrap();
    let params = BlendParams::default()
        .with_gamma(rng.random_range(0.2..1.0))
        .with_tau(0.0)
        .with_top_k(32);
    let mut up = FeatureImage::new(24, 24, d);
    for g in up.data_mut() {
        *g = rng.random_range(-1.0..1.0);
    }
    (scene, camera, params, up)
}

fn check(seed: u64, projection: Projection, sixd: bool) -> bool {
    let (scene, camera, params, up) = random_case(seed, projection, sixd);
    // central differences straddling a silhouette are meaningless
    if silhouette_margin(&scene, &camera) < 5e-5 {
        return false;
    }
    let report = gradcheck(&scene, &camera, &params, &up, 1e-6, 1e-4, 1e-8).unwrap();
    if let Some(&j) = report.failures.first() {
        panic!(
            "seed {seed} param {j}: analytic {} fd {}",
            report.analytic[j], report.numeric[j]
        );
    }
    true
}

fn run(seeds: std::ops::Range<u64>, projection: Projection, sixd: bool) {
    let checked = seeds.filter(|&s| check(s, projection, sixd)).count();
    assert!(checked >= 10, "only {checked} scenes were checkable");
}

#[test]
fn pinhole_axis_angle() {
    run(0..30, Projection::Pinhole, false);
}

#[test]
fn pinhole_sixd() {
    run(100..130, Projection::Pinhole, true);
}

#[test]
fn orthographic() {
    run(200..230, Projection::Orthographic, false);
}
