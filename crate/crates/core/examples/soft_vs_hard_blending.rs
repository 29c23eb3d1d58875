//! How the blending temperature trades a soft, order-agnostic mix for hard
//! z-buffer-like occlusion. Two overlapping spheres, red in front of blue.
//!
//! `cargo run --release --example soft_vs_hard_blending -- [out_dir]`

use std::path::PathBuf;

use nalgebra::Vector3;
use softsphere::camera::Sensor;
use softsphere::imaging::{write_png, BitDepth};
use softsphere::{render_forward, BlendParams, Camera, Sphere, SphereScene};

fn main() -> softsphere::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "example_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| softsphere::Error::io(&out, e))?;

    let mut scene = SphereScene::new(3, vec![1.0, 1.0, 1.0])?;
    scene.push(Sphere::new(Vector3::new(-0.4, 0.0, 8.0), 1.0, 1.0, vec![0.9, 0.1, 0.1]))?;
    scene.push(Sphere::new(Vector3::new(0.4, 0.0, 10.0), 1.2, 1.0, vec![0.1, 0.2, 0.9]))?;
    let camera = Camera::looking_down_z(5.0, 2.0, Sensor::new(128, 128))?;

    // Center of the overlap region.
    let (x, y) = (64, 64);
    println!("gamma     pixel color (r, g, b)");
    for gamma in [1.0, 0.3, 0.1, 0.03, 1e-2, 1e-3, 1e-4] {
        let params = BlendParams::default().with_gamma(gamma);
        let img = render_forward(&scene, &camera, &params)?.image;
        let p = img.pixel(x, y);
        println!("{gamma:<8}  ({:.3}, {:.3}, {:.3})", p[0], p[1], p[2]);
        write_png(&img, out.join(format!("blend_gamma_{gamma}.png")), BitDepth::Eight)?;
    }
    println!("small gamma: the front (red) sphere wins the overlap; large gamma: colors and background mix");
    Ok(())
}
