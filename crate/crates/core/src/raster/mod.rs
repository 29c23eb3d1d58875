//! Forward rendering: bounds and depth sort, tile candidate search, per-pixel
//! blending with top-K tracking and early termination.
//!
//! Tiles are drawn in parallel and assembled in a fixed order; each pixel's
//! value depends only on the sorted records, so the output does not depend on
//! the number of workers.

pub mod bounds;
mod draw;
pub mod tiles;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bounds::{
    compute_bounds, depth_order, pixel_footprint, ray_geometry, sort_draw_records, sphere_bounds, BoundsRecord,
    DrawRecord, RayGeometry, SUBPIXEL_RADIUS_PX,
};
pub use tiles::{gather_tile_candidates, tile_grid, TileRect, DEFAULT_TILE_SIZE};

use crate::blend::BlendParams;
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::imaging::FeatureImage;
use crate::scene::SphereScene;

/// One stored hit of the backward buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferEntry {
    pub sphere_id: u32,
    pub z: f64,
    pub closeness: f64,
}

impl BufferEntry {
    pub(crate) const EMPTY: BufferEntry = BufferEntry {
        sphere_id: u32::MAX,
        z: 0.0,
        closeness: 0.0,
    };
}

/// Per-pixel result of [`draw_pixel`].
#[derive(Debug, Clone, PartialEq)]
pub struct PixelRecord {
    /// `ln D`; the denominator itself overflows for small gamma.
    pub log_denominator: f64,
    pub background_weight: f64,
    /// Up to `top_k` hits, nearest (largest `z`) first.
    pub entries: Vec<BufferEntry>,
    pub candidates_tested: u64,
    pub hits: u64,
    pub early_stopped: bool,
}

/// Everything the backward pass needs from a forward render.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardBuffer {
    width: u32,
    height: u32,
    top_k: usize,
    num_spheres: usize,
    params: BlendParams,
    log_denominator: Vec<f64>,
    background_weight: Vec<f64>,
    counts: Vec<u16>,
    entries: Vec<BufferEntry>,
}

impl BackwardBuffer {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    /// Sphere count of the scene that produced the buffer.
    pub fn num_spheres(&self) -> usize {
        self.num_spheres
    }

    pub fn params(&self) -> &BlendParams {
        &self.params
    }

    fn at(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn log_denominator(&self, x: u32, y: u32) -> f64 {
        self.log_denominator[self.at(x, y)]
    }

    /// `D` itself; may be `inf` for very small gamma.
    pub fn denominator(&self, x: u32, y: u32) -> f64 {
        self.log_denominator(x, y).exp()
    }

    pub fn background_weight(&self, x: u32, y: u32) -> f64 {
        self.background_weight[self.at(x, y)]
    }

    /// Stored hits of pixel `(x, y)`, nearest first.
    pub fn entries(&self, x: u32, y: u32) -> &[BufferEntry] {
        let i = self.at(x, y);
        let start = i * self.top_k;
        &self.entries[start..start + self.counts[i] as usize]
    }
}

/// Counters describing the work done by a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RenderStats {
    pub spheres: u64,
    pub spheres_on_sensor: u64,
    pub subpixel_spheres: u64,
    pub pixels: u64,
    /// Sorted records examined by the tile candidate search, summed over tiles.
    pub records_scanned: u64,
    /// Pixel/sphere pairs that reached the ray-sphere test.
    pub candidates_tested: u64,
    pub hits_blended: u64,
    pub pixels_early_stopped: u64,
}

impl RenderStats {
    fn add(&mut self, o: &RenderStats) {
        self.records_scanned += o.records_scanned;
        self.candidates_tested += o.candidates_tested;
        self.hits_blended += o.hits_blended;
        self.pixels_early_stopped += o.pixels_early_stopped;
        self.pixels += o.pixels;
    }

    pub fn early_stop_ratio(&self) -> f64 {
        if self.pixels == 0 {
            0.0
        } else {
            self.pixels_early_stopped as f64 / self.pixels as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Precision {
    /// Scene, camera and output rounded to `f32`; arithmetic stays in `f64`.
    #[serde(rename = "32")]
    F32,
    #[default]
    #[serde(rename = "64")]
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub tile_size: u32,
    /// Produce a [`BackwardBuffer`].
    pub keep_buffer: bool,
    /// Attach the background-weight plane to the image.
    pub background_plane: bool,
    pub precision: Precision,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            tile_size: DEFAULT_TILE_SIZE,
            keep_buffer: true,
            background_plane: false,
            precision: Precision::F64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: FeatureImage,
    pub buffer: Option<BackwardBuffer>,
    pub stats: RenderStats,
}

/// Bounds and draw records in depth order, plus the count of on-sensor records.
pub struct SortedRecords {
    pub bounds: Vec<BoundsRecord>,
    pub draws: Vec<DrawRecord>,
    pub on_sensor: usize,
}

pub fn prepare_records(scene: &SphereScene, camera: &Camera) -> SortedRecords {
    let (bounds, draws) = compute_bounds(scene, camera);
    let (bounds, draws) = sort_draw_records(bounds, draws);
    let on_sensor = bounds.iter().take_while(|b| !b.off_sensor).count();
    SortedRecords {
        bounds,
        draws,
        on_sensor,
    }
}

/// Draws one pixel against `candidates` (positions into the sorted arrays,
/// depth-sorted).
pub fn draw_pixel(
    x: u32,
    y: u32,
    candidates: &[u32],
    records: &SortedRecords,
    scene: &SphereScene,
    camera: &Camera,
    params: &BlendParams,
) -> (Vec<f64>, PixelRecord) {
    let ctx = draw::DrawContext {
        camera,
        params,
        spheres: scene.spheres(),
        background: scene.background(),
        bounds: &records.bounds,
        draws: &records.draws,
    };
    draw::draw_pixel_record(&ctx, x, y, candidates)
}

fn quantized_camera(camera: &Camera) -> Result<Camera> {
    let v: Vec<f64> = camera.to_vector().iter().map(|&x| x as f32 as f64).collect();
    Camera::from_vector(&v, *camera.sensor())
}

pub fn render_forward(scene: &SphereScene, camera: &Camera, params: &BlendParams) -> Result<RenderOutput> {
    render_forward_with(scene, camera, params, &RenderOptions::default())
}

pub fn render_forward_with(
    scene: &SphereScene,
    camera: &Camera,
    params: &BlendParams,
    opts: &RenderOptions,
) -> Result<RenderOutput> {
    params.validate()?;
    if opts.tile_size == 0 {
        return Err(Error::Config("tile size must be at least 1".into()));
    }
    if opts.precision == Precision::F32 {
        let mut s = scene.clone();
        s.quantize_f32();
        let cam = quantized_camera(camera)?;
        let mut out = render_inner(&s, &cam, params, opts)?;
        out.image.round_to_f32();
        return Ok(out);
    }
    render_inner(scene, camera, params, opts)
}

fn render_inner(
    scene: &SphereScene,
    camera: &Camera,
    params: &BlendParams,
    opts: &RenderOptions,
) -> Result<RenderOutput> {
    scene.validate()?;
    if scene.len() >= u32::MAX as usize {
        return Err(Error::Config("too many spheres for 32-bit ids".into()));
    }
    let (w, h) = (camera.width(), camera.height());
    let d = scene.feature_dim();
    let k = params.top_k;
    let records = prepare_records(scene, camera);
    let ctx = draw::DrawContext {
        camera,
        params,
        spheres: scene.spheres(),
        background: scene.background(),
        bounds: &records.bounds,
        draws: &records.draws,
    };
    let tiles = tile_grid(w, h, opts.tile_size);
    let outputs: Vec<draw::TileOutput> = tiles
        .par_iter()
        .map(|t| draw::draw_tile(&ctx, *t, records.on_sensor, opts.keep_buffer))
        .collect();

    let npx = w as usize * h as usize;
    let mut image = FeatureImage::new(w, h, d);
    let mut bg = vec![0.0; npx];
    let (mut log_d, mut counts, mut entries) = if opts.keep_buffer {
        (vec![0.0; npx], vec![0u16; npx], vec![BufferEntry::EMPTY; npx * k])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    let mut stats = RenderStats {
        spheres: scene.len() as u64,
        spheres_on_sensor: records.on_sensor as u64,
        subpixel_spheres: records.draws[..records.on_sensor].iter().filter(|r| r.subpixel).count() as u64,
        ..Default::default()
    };
    let data = image.data_mut();
    for (t, o) in tiles.iter().zip(&outputs) {
        stats.add(&o.stats);
        let tw = t.width() as usize;
        for (row, y) in (t.y0..=t.y1).enumerate() {
            let dst = y as usize * w as usize + t.x0 as usize;
            let src = row * tw;
            data[dst * d..(dst + tw) * d].copy_from_slice(&o.features[src * d..(src + tw) * d]);
            bg[dst..dst + tw].copy_from_slice(&o.background_weight[src..src + tw]);
            if opts.keep_buffer {
                log_d[dst..dst + tw].copy_from_slice(&o.log_denominator[src..src + tw]);
                counts[dst..dst + tw].copy_from_slice(&o.counts[src..src + tw]);
                entries[dst * k..(dst + tw) * k].copy_from_slice(&o.entries[src * k..(src + tw) * k]);
            }
        }
    }
    let buffer = opts.keep_buffer.then(|| BackwardBuffer {
        width: w,
        height: h,
        top_k: k,
        num_spheres: scene.len(),
        params: *params,
        log_denominator: log_d,
        background_weight: bg.clone(),
        counts,
        entries,
    });
    if opts.background_plane {
        image.set_background_weight(Some(bg))?;
    }
    Ok(RenderOutput { image, buffer, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Sensor;
    use crate::scene::Sphere;
    use nalgebra::Vector3;

    fn camera(w: u32, h: u32) -> Camera {
        Camera::from_vector(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0, 2.0], Sensor::new(w, h)).unwrap()
    }

    #[test]
    fn empty_scene_is_background() {
        let scene = SphereScene::new(3, vec![0.1, 0.2, 0.3]).unwrap();
        let out = render_forward(&scene, &camera(20, 10), &BlendParams::default()).unwrap();
        assert_eq!(out.image, FeatureImage::filled(20, 10, &[0.1, 0.2, 0.3]));
        let buf = out.buffer.unwrap();
        assert!(buf.entries(3, 3).is_empty());
        assert_eq!(buf.background_weight(3, 3), 1.0);
    }

    #[test]
    fn centered_opaque_sphere_hard_gamma() {
        let mut scene = SphereScene::new(3, vec![0.0; 3]).unwrap();
        scene
            .push(Sphere::new(Vector3::new(0.0, 0.0, 10.0), 2.0, 1.0, vec![0.2, 0.4, 0.6]))
            .unwrap();
        let out = render_forward(&scene, &camera(33, 33), &BlendParams::default().with_gamma(1e-5)).unwrap();
        let px = out.image.pixel(16, 16);
        for (a, b) in px.iter().zip([0.2, 0.4, 0.6]) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(out.image.pixel(0, 0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_covering_sphere_costs_one_test_per_pixel() {
        let mut scene = SphereScene::new(1, vec![0.0]).unwrap();
        scene
            .push(Sphere::new(Vector3::new(0.0, 0.0, 10.0), 8.0, 1.0, vec![1.0]))
            .unwrap();
        let out = render_forward(&scene, &camera(40, 30), &BlendParams::default()).unwrap();
        assert_eq!(out.stats.candidates_tested, 40 * 30);
        assert_eq!(out.stats.hits_blended, 40 * 30);
    }

    #[test]
    fn non_square_tiles_and_sizes_agree() {
        let mut scene = SphereScene::new(2, vec![0.0, 1.0]).unwrap();
        for i in 0..20 {
            let f = i as f64;
            scene
                .push(Sphere::new(
                    Vector3::new((f * 0.37).sin() * 2.0, (f * 0.71).cos() * 1.5, 12.0 + f * 0.3),
                    0.3 + 0.05 * f,
                    0.5 + 0.02 * f,
                    vec![f / 20.0, 1.0 - f / 20.0],
                ))
                .unwrap();
        }
        let cam = camera(37, 23);
        let p = BlendParams::default();
        let a = render_forward_with(&scene, &cam, &p, &RenderOptions::default()).unwrap();
        let b = render_forward_with(
            &scene,
            &cam,
            &p,
            &RenderOptions {
                tile_size: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.buffer, b.buffer);
    }

    #[test]
    fn draw_pixel_matches_tiled_render() {
        let mut scene = SphereScene::new(1, vec![0.0]).unwrap();
        scene
            .push(Sphere::new(Vector3::new(0.5, 0.0, 10.0), 1.0, 0.8, vec![1.0]))
            .unwrap();
        scene
            .push(Sphere::new(Vector3::new(0.0, 0.0, 12.0), 1.5, 0.9, vec![0.5]))
            .unwrap();
        let cam = camera(24, 24);
        let p = BlendParams::default().with_tau(0.0);
        let out = render_forward(&scene, &cam, &p).unwrap();
        let records = prepare_records(&scene, &cam);
        let all = gather_tile_candidates(&TileRect::whole_image(24, 24), &records.bounds);
        let (f, rec) = draw_pixel(13, 11, &all, &records, &scene, &cam, &p);
        assert_eq!(f.as_slice(), out.image.pixel(13, 11));
        assert_eq!(rec.entries.as_slice(), out.buffer.unwrap().entries(13, 11));
    }
}
