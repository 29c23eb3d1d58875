//! Tile grid and per-tile candidate selection over the depth-sorted records.

use super::bounds::BoundsRecord;

pub const DEFAULT_TILE_SIZE: u32 = 16;

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl TileRect {
    pub fn whole_image(width: u32, height: u32) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width - 1,
            y1: height - 1,
        }
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }

    pub fn pixel_count(&self) -> usize {
        self.width() as usize * self.height() as usize
    }
}

/// Tiles in row-major order, clipped at the image border.
pub fn tile_grid(width: u32, height: u32, tile_size: u32) -> Vec<TileRect> {
    let mut tiles = Vec::new();
    let mut y0 = 0;
    while y0 < height {
        let mut x0 = 0;
        while x0 < width {
            tiles.push(TileRect {
                x0,
                y0,
                x1: (x0 + tile_size).min(width) - 1,
                y1: (y0 + tile_size).min(height) - 1,
            });
            x0 += tile_size;
        }
        y0 += tile_size;
    }
    tiles
}

/// Positions (into the sorted arrays) of every record whose rectangle
/// overlaps `tile`, in depth order.
pub fn gather_tile_candidates(tile: &TileRect, sorted_bounds: &[BoundsRecord]) -> Vec<u32> {
    sorted_bounds
        .iter()
        .enumerate()
        .filter(|(_, b)| b.overlaps(tile.x0, tile.x1, tile.y0, tile.y1))
        .map(|(i, _)| i as u32)
        .collect()
}

/// The same filter as [`gather_tile_candidates`], evaluated on demand: the
/// list only grows as far as some pixel of the tile asks for it, so tiles
/// whose pixels all terminate early never scan the occluded tail.
pub(crate) struct LazyCandidates<'a> {
    tile: TileRect,
    bounds: &'a [BoundsRecord],
    /// Only the first `limit` records can be on-sensor.
    limit: usize,
    cursor: usize,
    list: Vec<u32>,
}

const BATCH: usize = 32;

impl<'a> LazyCandidates<'a> {
    pub fn new(tile: TileRect, bounds: &'a [BoundsRecord], limit: usize) -> Self {
        Self {
            tile,
            bounds,
            limit,
            cursor: 0,
            list: Vec::new(),
        }
    }

    /// The `j`-th candidate, scanning further into the sorted arrays if needed.
    #[inline]
    pub fn get(&mut self, j: usize) -> Option<u32> {
        while j >= self.list.len() {
            if self.cursor >= self.limit {
                return None;
            }
            let t = self.tile;
            let end = self.limit;
            let mut found = 0;
            while self.cursor < end && found < BATCH {
                if self.bounds[self.cursor].overlaps(t.x0, t.x1, t.y0, t.y1) {
                    self.list.push(self.cursor as u32);
                    found += 1;
                }
                self.cursor += 1;
            }
        }
        Some(self.list[j])
    }

    /// Records examined so far.
    pub fn scanned(&self) -> usize {
        self.cursor
    }
}
