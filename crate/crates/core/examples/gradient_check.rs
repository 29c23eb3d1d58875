//! Compares analytic gradients of a rendered image against central
//! differences, then shows the normalized gradients an optimizer sees.
//!
//! `cargo run --release --example gradient_check`

use nalgebra::Vector3;
use softsphere::camera::Sensor;
use softsphere::testkit::{gradcheck, silhouette_margin};
use softsphere::{
    render_backward, render_forward, BackwardOptions, BlendParams, Camera, FeatureImage, Sphere, SphereScene,
};

fn main() -> softsphere::Result<()> {
    let mut scene = SphereScene::new(3, vec![0.1, 0.1, 0.1])?;
    scene.push(Sphere::new(
        Vector3::new(-0.5, 0.2, 12.0),
        1.3,
        0.8,
        vec![0.9, 0.4, 0.2],
    ))?;
    scene.push(Sphere::new(
        Vector3::new(0.6, -0.3, 14.0),
        1.6,
        0.6,
        vec![0.2, 0.7, 0.5],
    ))?;
    let camera = Camera::looking_down_z(5.0, 2.0, Sensor::new(32, 32))?;
    let params = BlendParams::default().with_gamma(0.5).with_tau(0.0);

    // A silhouette passing almost exactly through a pixel center makes the
    // image non-smooth at that point, which breaks finite differences.
    println!("silhouette margin {:.2e}", silhouette_margin(&scene, &camera));

    // Loss = sum(upstream * image) with a fixed, arbitrary upstream.
    let mut upstream = FeatureImage::new(32, 32, 3);
    for (i, g) in upstream.data_mut().iter_mut().enumerate() {
        *g = ((i * 7919) % 13) as f64 / 6.0 - 1.0;
    }
    let report = gradcheck(&scene, &camera, &params, &upstream, 1e-6, 1e-4, 1e-8)?;
    println!(
        "{} parameters (spheres then camera), worst relative error {:.2e}, {} failures",
        report.analytic.len(),
        report.worst_relative,
        report.failures.len()
    );
    for (j, (a, n)) in report.analytic.iter().zip(&report.numeric).take(8).enumerate() {
        println!("  d/dp[{j}]  analytic {a:+.6e}  numeric {n:+.6e}");
    }

    // What the optimizer uses: per-sphere gradients divided by the number of
    // pixels the sphere touches, with tiny spheres' geometry gated.
    let out = render_forward(&scene, &camera, &params)?;
    let buffer = out.buffer.expect("buffer kept by default");
    let (g, cam) = render_backward(
        &scene,
        &camera,
        &params,
        &buffer,
        &upstream,
        &BackwardOptions::default(),
    )?;
    for i in 0..g.len() {
        println!(
            "sphere {i} ({} px): d position {:?}, d radius {:+.3e}",
            g.pixel_count[i],
            g.d_position[i].as_slice(),
            g.d_radius[i]
        );
    }
    println!("camera gradient {:?}", cam.to_vector());
    Ok(())
}
