//! Renders per-sphere albedo and surface normals as a 6-channel feature image
//! and lights it with a directional light afterwards.
//!
//! `cargo run --release --example diffuse_lighting -- [out_dir]`

use std::path::PathBuf;

use nalgebra::Vector3;
use softsphere::camera::Sensor;
use softsphere::imaging::{write_png, BitDepth};
use softsphere::shade::{DirectionalLight, Shading};
use softsphere::synth::lat_long_points;
use softsphere::{render_forward, BlendParams, Camera, Sphere, SphereScene};

fn main() -> softsphere::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "example_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| softsphere::Error::io(&out, e))?;

    // A shell of small spheres; each carries an albedo and the outward normal
    // of the surface it samples.
    let center = Vector3::zeros();
    let mut scene = SphereScene::new(6, vec![0.0; 6])?;
    for p in lat_long_points(center, 1.5, 40, 80) {
        let n = (p - center).normalize();
        let albedo = [0.8, 0.55 + 0.2 * n.y, 0.3];
        scene.push(Sphere::new(
            p,
            0.09,
            1.0,
            vec![albedo[0], albedo[1], albedo[2], n.x, n.y, n.z],
        ))?;
    }
    let camera = Camera::look_at(
        Vector3::new(0.0, 0.0, -8.0),
        center,
        Vector3::new(0.0, -1.0, 0.0),
        5.0,
        2.0,
        Sensor::new(256, 256),
    )?;
    let features = render_forward(&scene, &camera, &BlendParams::default().with_gamma(1e-3))?.image;

    for (name, dir) in [
        ("left", Vector3::new(1.0, 0.0, 0.5)),
        ("top", Vector3::new(0.0, 1.0, 0.5)),
    ] {
        let shading = Shading::Diffuse {
            lights: vec![DirectionalLight::new(dir, 0.9, 0.1)?],
        };
        let img = shading.apply(&features, &camera)?;
        let path = out.join(format!("diffuse_{name}.png"));
        write_png(&img, &path, BitDepth::Eight)?;
        println!(
            "light from {name}: mean intensity {:.3}, wrote {}",
            img.mean(),
            path.display()
        );
    }
    Ok(())
}
