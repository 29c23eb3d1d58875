//! Recovers one sphere's position, radius and color from four rendered views.
//!
//! The targets are rendered from a ground-truth scene, so the optimum is
//! known exactly. Run with `cargo run --release --example fit_single_sphere`.

use nalgebra::Vector3;
use softsphere::camera::Sensor;
use softsphere::optim::{fit, FitConfig, GammaSchedule, LearningRates, Observation};
use softsphere::shade::Shading;
use softsphere::synth::orbit_cameras;
use softsphere::{render_forward, BlendParams, Sphere, SphereScene};

fn scene(p: Vector3<f64>, r: f64, rgb: [f64; 3]) -> SphereScene {
    let mut s = SphereScene::new(3, vec![0.0; 3]).unwrap();
    s.push(Sphere::new(p, r, 1.0, rgb.to_vec())).unwrap();
    s
}

fn main() -> softsphere::Result<()> {
    let truth = scene(Vector3::new(0.15, -0.1, 0.05), 1.0, [0.8, 0.3, 0.55]);
    let cams = orbit_cameras(4, Vector3::zeros(), 8.0, 5.0, 2.0, Sensor::new(48, 48))?;
    let gamma = 0.1;
    let observations = cams
        .into_iter()
        .map(|camera| {
            let image = render_forward(&truth, &camera, &BlendParams::default().with_gamma(gamma))?.image;
            Ok(Observation { image, camera })
        })
        .collect::<softsphere::Result<Vec<_>>>()?;

    let start = scene(Vector3::new(-0.1, 0.1, -0.1), 1.2, [0.5, 0.5, 0.5]);
    let config = FitConfig {
        steps: 500,
        learning_rates: LearningRates {
            position: 1e-2,
            radius: 1e-2,
            opacity: 0.0,
            feature: 1e-2,
            ..LearningRates::default()
        },
        lr_decay: 0.99,
        gamma: GammaSchedule::constant(gamma),
        top_k: 5,
        views_per_step: 4,
        ..FitConfig::default()
    };
    let t0 = std::time::Instant::now();
    let result = fit(start, observations, Shading::None, config)?;
    let got = &result.scene.spheres()[0];
    let want = &truth.spheres()[0];
    for r in result.trace.iter().step_by(50) {
        println!("step {:4}  loss {:.6}", r.step, r.loss);
    }
    println!("position error {:.2e}", (got.position - want.position).norm());
    println!("radius error   {:.2e}", (got.radius - want.radius).abs());
    let color_err = got
        .feature
        .iter()
        .zip(&want.feature)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("color error    {:.2e}", color_err);
    println!("took {:.2?}", t0.elapsed());
    Ok(())
}
