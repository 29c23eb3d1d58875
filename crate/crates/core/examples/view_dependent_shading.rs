//! Jointly fits sphere features and a view-conditioned linear shader so that
//! the same scene reproduces two differently shaded target views.
//!
//! `cargo run --release --example view_dependent_shading`

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softsphere::camera::Sensor;
use softsphere::optim::{fit, FitConfig, GammaSchedule, LearningRates, Observation};
use softsphere::shade::{LinearShader, Shading};
use softsphere::{render_forward, BlendParams, Camera, Sphere, SphereScene};

fn main() -> softsphere::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = 4;
    let mut truth = SphereScene::new(d, vec![0.0; d])?;
    for _ in 0..40 {
        let p = Vector3::new(
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.0..1.0),
        );
        let f = (0..d).map(|_| rng.random()).collect();
        truth.push(Sphere::new(p, rng.random_range(0.2..0.5), 1.0, f))?;
    }
    // Target shader: mixes the features and tints by view direction.
    let mut shader = LinearShader::identity(d, true);
    for w in shader.weight.iter_mut() {
        *w += rng.random_range(-0.3..0.3);
    }
    let target_shading = Shading::Linear { shader };

    let gamma = 0.05;
    let params = BlendParams::default().with_gamma(gamma);
    let cams = [Vector3::new(-3.0, 0.0, -8.0), Vector3::new(3.0, 1.0, -8.0)]
        .into_iter()
        .map(|eye| {
            Camera::look_at(
                eye,
                Vector3::zeros(),
                Vector3::new(0.0, -1.0, 0.0),
                5.0,
                2.5,
                Sensor::new(64, 64),
            )
        })
        .collect::<softsphere::Result<Vec<_>>>()?;
    let observations = cams
        .into_iter()
        .map(|camera| {
            let f = render_forward(&truth, &camera, &params)?.image;
            Ok(Observation {
                image: target_shading.apply(&f, &camera)?,
                camera,
            })
        })
        .collect::<softsphere::Result<Vec<_>>>()?;

    // Same geometry, gray features, identity shader.
    let mut start = truth.clone();
    for s in start.spheres_mut() {
        s.feature.iter_mut().for_each(|v| *v = 0.5);
    }
    let config = FitConfig {
        steps: 600,
        learning_rates: LearningRates {
            position: 0.0,
            radius: 0.0,
            opacity: 0.0,
            feature: 1e-2,
            shader: 1e-2,
            ..LearningRates::default()
        },
        gamma: GammaSchedule::constant(gamma),
        views_per_step: 2,
        ..FitConfig::default()
    };
    let result = fit(
        start,
        observations,
        Shading::Linear {
            shader: LinearShader::identity(d, true),
        },
        config,
    )?;
    let first = result.trace.first().map_or(0.0, |r| r.photometric);
    let last = result.trace.last().map_or(0.0, |r| r.photometric);
    println!(
        "mean l1 over both views: {first:.4} -> {last:.4} after {} steps",
        result.trace.len()
    );
    Ok(())
}
