//! Renders a random scene of small colored spheres, writes it as PNG and
//! round-trips the scene through the binary scene format.
//!
//! `cargo run --release --example render_random_scene -- [count] [out_dir]`

use std::path::PathBuf;
use std::time::Instant;

use softsphere::imaging::{write_png, BitDepth};
use softsphere::scene::{load_scene, save_scene};
use softsphere::synth::{quickstart_camera, random_scene};
use softsphere::{render_forward, BlendParams};

fn main() -> softsphere::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map_or(10_000, |s| s.parse().expect("sphere count"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "example_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| softsphere::Error::io(&out, e))?;

    let mut scene = random_scene(count, 7);
    let camera = quickstart_camera(512, 512);
    let params = BlendParams::default();

    let t = Instant::now();
    let rendered = render_forward(&scene, &camera, &params)?;
    let s = &rendered.stats;
    println!(
        "{count} spheres at 512x512 in {:.1?}: {} on sensor, {} sub-pixel, {} hits blended",
        t.elapsed(),
        s.spheres_on_sensor,
        s.subpixel_spheres,
        s.hits_blended
    );
    write_png(&rendered.image, out.join("random_scene.png"), BitDepth::Eight)?;

    // The file format stores f32; quantizing first makes the round trip exact.
    scene.quantize_f32();
    let path = out.join("random_scene.psc");
    save_scene(&scene, &path)?;
    assert_eq!(load_scene(&path)?, scene);
    println!(
        "wrote {} and {}",
        out.join("random_scene.png").display(),
        path.display()
    );
    Ok(())
}
