//! Step 2: per-pixel traversal of depth-sorted candidates.

use nalgebra::Vector3;

use super::bounds::{ray_geometry, BoundsRecord, DrawRecord};
use super::tiles::{LazyCandidates, TileRect};
use super::{BufferEntry, PixelRecord, RenderStats};
use crate::blend::{stop_depth_bound_log, BlendParams, OnlineBlend};
use crate::camera::Camera;
use crate::scene::Sphere;

pub(crate) trait CandidateSource {
    fn get(&mut self, j: usize) -> Option<u32>;
}

impl CandidateSource for &[u32] {
    #[inline]
    fn get(&mut self, j: usize) -> Option<u32> {
        <[u32]>::get(self, j).copied()
    }
}

impl CandidateSource for LazyCandidates<'_> {
    #[inline]
    fn get(&mut self, j: usize) -> Option<u32> {
        LazyCandidates::get(self, j)
    }
}

/// Read-only inputs shared by every pixel of a render.
pub(crate) struct DrawContext<'a> {
    pub camera: &'a Camera,
    pub params: &'a BlendParams,
    pub spheres: &'a [Sphere],
    pub background: &'a [f64],
    pub bounds: &'a [BoundsRecord],
    pub draws: &'a [DrawRecord],
}

/// Inserts into a list sorted by descending `z`, keeping at most `k`
/// entries; among equal depths the earlier arrival stays first.
#[inline]
pub(crate) fn insert_top_k(list: &mut Vec<BufferEntry>, k: usize, e: BufferEntry) {
    if list.len() == k && list.last().is_some_and(|l| l.z >= e.z) {
        return;
    }
    let pos = list.partition_point(|x| x.z >= e.z);
    if list.len() == k {
        list.pop();
    }
    list.insert(pos, e);
}

pub(crate) struct PixelState {
    pub blend: OnlineBlend,
    pub top: Vec<BufferEntry>,
}

impl PixelState {
    pub fn new(params: &BlendParams, feature_dim: usize) -> Self {
        Self {
            blend: OnlineBlend::new(params, feature_dim),
            top: Vec::with_capacity(params.top_k),
        }
    }
}

/// Draws one pixel. Writes the blended feature to `out` and leaves the
/// accumulator and top-K list in `state`. Returns (tested, hits, stopped).
pub(crate) fn draw_pixel_into<C: CandidateSource>(
    ctx: &DrawContext<'_>,
    x: u32,
    y: u32,
    candidates: &mut C,
    state: &mut PixelState,
    out: &mut [f64],
) -> (u64, u64, bool) {
    state.blend.reset();
    state.top.clear();
    let (origin, dir): (Vector3<f64>, Vector3<f64>) = ctx.camera.camera_ray(x as f64 + 0.5, y as f64 + 0.5);
    let stopping = ctx.params.tau > 0.0;
    let mut z_stop = stop_depth_bound_log(state.blend.log_denominator(), ctx.params);
    let (mut tested, mut hits, mut stopped) = (0u64, 0u64, false);
    let mut j = 0;
    while let Some(c) = candidates.get(j) {
        j += 1;
        let rec = &ctx.draws[c as usize];
        if stopping && rec.max_ndc < z_stop {
            stopped = true;
            break;
        }
        if !ctx.bounds[c as usize].contains(x, y) {
            continue;
        }
        tested += 1;
        let g = ray_geometry(&rec.position, &origin, &dir);
        if !g.hits(rec.effective_radius) {
            continue;
        }
        hits += 1;
        let z = ctx.camera.ndc_depth(g.lambda);
        let closeness = g.closeness(rec.effective_radius);
        let feature = &ctx.spheres[rec.index as usize].feature;
        state.blend.push(z, closeness, rec.opacity, feature);
        insert_top_k(
            &mut state.top,
            ctx.params.top_k,
            BufferEntry {
                sphere_id: rec.index,
                z,
                closeness,
            },
        );
        if stopping {
            z_stop = stop_depth_bound_log(state.blend.log_denominator(), ctx.params);
        }
    }
    state.blend.finish(ctx.background, out);
    (tested, hits, stopped)
}

/// Draws a single pixel against an explicit candidate list.
pub(crate) fn draw_pixel_record(ctx: &DrawContext<'_>, x: u32, y: u32, candidates: &[u32]) -> (Vec<f64>, PixelRecord) {
    let d = ctx.background.len();
    let mut state = PixelState::new(ctx.params, d);
    let mut out = vec![0.0; d];
    let mut src = candidates;
    let (tested, hits, stopped) = draw_pixel_into(ctx, x, y, &mut src, &mut state, &mut out);
    (
        out,
        PixelRecord {
            log_denominator: state.blend.log_denominator(),
            background_weight: state.blend.background_weight(),
            entries: state.top,
            candidates_tested: tested,
            hits,
            early_stopped: stopped,
        },
    )
}

/// Output of one tile, pixels in row-major order within the tile.
pub(crate) struct TileOutput {
    pub features: Vec<f64>,
    pub background_weight: Vec<f64>,
    pub log_denominator: Vec<f64>,
    pub counts: Vec<u16>,
    /// `top_k` slots per pixel.
    pub entries: Vec<BufferEntry>,
    pub stats: RenderStats,
}

pub(crate) fn draw_tile(ctx: &DrawContext<'_>, tile: TileRect, on_sensor: usize, keep_buffer: bool) -> TileOutput {
    let d = ctx.background.len();
    let k = ctx.params.top_k;
    let n = tile.pixel_count();
    let mut out = TileOutput {
        features: vec![0.0; n * d],
        background_weight: vec![0.0; n],
        log_denominator: if keep_buffer { vec![0.0; n] } else { Vec::new() },
        counts: if keep_buffer { vec![0; n] } else { Vec::new() },
        entries: if keep_buffer {
            vec![BufferEntry::EMPTY; n * k]
        } else {
            Vec::new()
        },
        stats: RenderStats::default(),
    };
    let mut lazy = LazyCandidates::new(tile, ctx.bounds, on_sensor);
    let mut state = PixelState::new(ctx.params, d);
    let mut i = 0;
    for y in tile.y0..=tile.y1 {
        for x in tile.x0..=tile.x1 {
            let (tested, hits, stopped) =
                draw_pixel_into(ctx, x, y, &mut lazy, &mut state, &mut out.features[i * d..(i + 1) * d]);
            out.background_weight[i] = state.blend.background_weight();
            if keep_buffer {
                out.log_denominator[i] = state.blend.log_denominator();
                out.counts[i] = state.top.len() as u16;
                out.entries[i * k..i * k + state.top.len()].copy_from_slice(&state.top);
            }
            out.stats.candidates_tested += tested;
            out.stats.hits_blended += hits;
            out.stats.pixels_early_stopped += stopped as u64;
            i += 1;
        }
    }
    out.stats.records_scanned = lazy.scanned() as u64;
    out.stats.pixels = n as u64;
    out
}
