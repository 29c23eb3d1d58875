//! Deforms 1352 spheres placed on a coarse sphere into a blob-and-bar shape
//! using only 64x64 silhouettes from 120 views.
//!
//! Run with `cargo run --release --example silhouette_reconstruction`.

use nalgebra::Vector3;
use softsphere::camera::Sensor;
use softsphere::optim::{FitConfig, Fitter, GammaSchedule, LearningRates, Observation};
use softsphere::shade::Shading;
use softsphere::synth::{blob_points, lat_long_points, orbit_cameras, silhouette_scene};
use softsphere::{render_forward, BlendParams};

fn main() -> softsphere::Result<()> {
    let steps: usize = std::env::args().nth(1).map_or(2000, |s| s.parse().expect("step count"));
    let truth = silhouette_scene(&blob_points(0.2), 0.2, 1.0);
    let cams = orbit_cameras(120, Vector3::zeros(), 10.0, 5.0, 2.8, Sensor::new(64, 64))?;
    let target_params = BlendParams::default().with_gamma(1e-3);
    let observations = cams
        .into_iter()
        .map(|camera| {
            let image = render_forward(&truth, &camera, &target_params)?.image;
            Ok(Observation { image, camera })
        })
        .collect::<softsphere::Result<Vec<_>>>()?;

    // Start from a shell that encloses the target: pixels no sphere covers send
    // no gradient, so the fit carves rather than grows.
    let init = silhouette_scene(&lat_long_points(Vector3::zeros(), 2.0, 26, 52), 0.25, 1.0);
    println!("{} target spheres, {} initial spheres", truth.len(), init.len());
    let config = FitConfig {
        steps,
        learning_rates: LearningRates {
            position: 5e-3,
            radius: 1e-3,
            opacity: 1e-2,
            feature: 0.0,
            ..LearningRates::default()
        },
        gamma: GammaSchedule { start: 0.1, end: 1e-3 },
        // These spheres project to about 3 px, where the gate would freeze them.
        gate_small_spheres: false,
        views_per_step: 4,
        ..FitConfig::default()
    };
    let t0 = std::time::Instant::now();
    let mut fitter = Fitter::new(init, observations.clone(), Shading::None, config)?;
    let steps_per_epoch = observations.len() / 4;
    let mut epoch_loss = 0.0;
    while !fitter.is_done() {
        let r = fitter.step()?;
        epoch_loss += r.photometric;
        if (r.step + 1) % steps_per_epoch == 0 {
            println!(
                "epoch {:3}  mean loss {:.4}",
                r.epoch,
                epoch_loss / steps_per_epoch as f64
            );
            epoch_loss = 0.0;
        }
    }
    let result = fitter.finish();
    let eval = target_params;
    let mut err = 0.0;
    for o in &observations {
        let img = render_forward(&result.scene, &o.camera, &eval)?.image;
        err += softsphere::optim::photometric_loss(&img, &o.image)?.0;
    }
    println!(
        "final mean silhouette error {:.4} over {} views",
        err / observations.len() as f64,
        observations.len()
    );
    println!("took {:.2?}", t0.elapsed());
    Ok(())
}
