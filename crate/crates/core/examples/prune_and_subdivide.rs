//! The two scene refinement operations: pruning spheres that are transparent
//! or never seen, and splitting each sphere into 12 smaller ones.
//!
//! `cargo run --release --example prune_and_subdivide`

use nalgebra::Vector3;
use softsphere::camera::Sensor;
use softsphere::optim::fit::visible_pixel_counts;
use softsphere::optim::{prune, subdivide, PruneConfig};
use softsphere::{render_forward, BlendParams, Camera, Sphere, SphereScene};

fn main() -> softsphere::Result<()> {
    let camera = Camera::looking_down_z(5.0, 2.0, Sensor::new(96, 96))?;
    let params = BlendParams::default().with_gamma(1e-3);
    let mut scene = SphereScene::new(3, vec![0.0; 3])?;
    scene.push(Sphere::new(
        Vector3::new(-0.6, 0.0, 10.0),
        0.8,
        1.0,
        vec![0.9, 0.3, 0.2],
    ))?;
    scene.push(Sphere::new(Vector3::new(0.7, 0.3, 10.0), 0.7, 0.9, vec![0.2, 0.8, 0.3]))?;
    // Nearly transparent.
    scene.push(Sphere::new(
        Vector3::new(0.0, -1.0, 9.0),
        0.5,
        0.004,
        vec![1.0, 1.0, 1.0],
    ))?;
    // Outside the field of view.
    scene.push(Sphere::new(
        Vector3::new(30.0, 0.0, 10.0),
        0.5,
        1.0,
        vec![1.0, 1.0, 0.0],
    ))?;
    // Hidden directly behind the first sphere.
    scene.push(Sphere::new(
        Vector3::new(-0.6, 0.0, 20.0),
        0.3,
        1.0,
        vec![0.0, 0.0, 1.0],
    ))?;

    let out = render_forward(&scene, &camera, &params)?;
    let counts = visible_pixel_counts(out.buffer.as_ref().expect("buffer"));
    println!("pixels per sphere before pruning: {counts:?}");
    let keep = prune(&mut scene, &counts, &PruneConfig::default())?;
    println!("kept {:?}, {} spheres left", keep, scene.len());

    // Children sit at distance r from the parent center. With radius r/sqrt 2
    // they cover the parent's silhouette; the default sqrt 2 roughly doubles
    // the footprint, which suits hull-like scenes that are re-fit afterwards.
    let before = render_forward(&scene, &camera, &params)?.image;
    let covered = |img: &softsphere::FeatureImage| img.data().chunks(3).filter(|p| p.iter().any(|&v| v > 0.01)).count();
    println!(
        "before subdivision: {} spheres cover {} px",
        scene.len(),
        covered(&before)
    );
    for scale in [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::SQRT_2] {
        let mut refined = scene.clone();
        subdivide(&mut refined, scale)?;
        let img = render_forward(&refined, &camera, &params)?.image;
        println!(
            "radius scale {scale:.4}: {} spheres cover {} px",
            refined.len(),
            covered(&img)
        );
    }
    Ok(())
}
