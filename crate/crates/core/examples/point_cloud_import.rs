//! Turns an ASCII PLY point cloud into a sphere scene and renders it.
//!
//! `cargo run --release --example point_cloud_import -- [file.ply] [out_dir]`
//! Without a file a small helix cloud is generated.

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::Vector3;
use softsphere::camera::Sensor;
use softsphere::imaging::{write_png, BitDepth};
use softsphere::scene::{import_point_cloud, parse_point_cloud, save_scene, PointCloudImport};
use softsphere::{render_forward, BlendParams, Camera};

fn helix_ply(points: usize) -> String {
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {points}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
    );
    for i in 0..points {
        let t = i as f64 / points as f64 * 6.0 * std::f64::consts::PI;
        let (x, y, z) = (t.cos(), t / 6.0 - 1.5, t.sin());
        let c = (255.0 * i as f64 / points as f64) as u8;
        writeln!(s, "{x} {y} {z} {c} 80 {}", 255 - c).unwrap();
    }
    s
}

fn main() -> softsphere::Result<()> {
    let mut args = std::env::args().skip(1);
    let input = args.next();
    let out = PathBuf::from(args.next().unwrap_or_else(|| "example_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| softsphere::Error::io(&out, e))?;

    let opts = PointCloudImport {
        radius: 0.08,
        background: vec![1.0; 3],
        ..PointCloudImport::default()
    };
    let scene = match input {
        Some(path) => import_point_cloud(path, &opts)?,
        None => parse_point_cloud(&helix_ply(400), &opts)?,
    };
    println!("imported {} spheres", scene.len());

    let camera = Camera::look_at(
        Vector3::new(0.0, 0.0, -7.0),
        Vector3::zeros(),
        Vector3::new(0.0, -1.0, 0.0),
        5.0,
        2.0,
        Sensor::new(256, 256),
    )?;
    let img = render_forward(&scene, &camera, &BlendParams::default())?.image;
    write_png(&img, out.join("point_cloud.png"), BitDepth::Eight)?;
    save_scene(&scene, out.join("point_cloud.psc"))?;
    println!("wrote point_cloud.png and point_cloud.psc to {}", out.display());
    Ok(())
}
