//! Early ray termination: with a large sphere in front of many hidden ones,
//! render cost stops growing with the number of hidden spheres.
//!
//! `cargo run --release --example early_stopping`

use std::time::Instant;

use softsphere::synth::{occluded_scene, quickstart_camera};
use softsphere::testkit::oracle_render;
use softsphere::{render_forward, BlendParams};

fn main() -> softsphere::Result<()> {
    let camera = quickstart_camera(256, 256);
    let params = BlendParams::default().with_gamma(0.05);
    println!("hidden    tau=0.01 ms  tau=0 ms  stopped  max |diff|");
    for hidden in [1_000, 10_000, 100_000] {
        let scene = occluded_scene(&camera, hidden, 11);
        let t = Instant::now();
        let fast = render_forward(&scene, &camera, &params)?;
        let fast_ms = t.elapsed().as_secs_f64() * 1e3;
        let t = Instant::now();
        let exact = render_forward(&scene, &camera, &params.with_tau(0.0))?;
        let exact_ms = t.elapsed().as_secs_f64() * 1e3;
        println!(
            "{hidden:<9} {fast_ms:>11.1}  {exact_ms:>8.1}  {:>6.1}%  {:.1e}",
            100.0 * fast.stats.early_stop_ratio(),
            fast.image.max_abs_diff(&exact.image)
        );
    }
    // The reference renderer visits every sphere for every pixel.
    let scene = occluded_scene(&camera, 1_000, 11);
    let t = Instant::now();
    oracle_render(&scene, &camera, &params);
    println!("reference renderer, 1000 hidden: {:.1?}", t.elapsed());
    Ok(())
}
