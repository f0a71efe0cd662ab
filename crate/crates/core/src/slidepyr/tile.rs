use alloc::string::String;
use alloc::vec::Vec;

use super::raster::RasterImage;

pub const TILE_PX: usize = 512;

/// A pixel is bright when all three channels are strictly above this value.
pub const BACKGROUND_LEVEL: u8 = 180;

/// Fraction of bright pixels at or above which a tile is background.
pub const BACKGROUND_FRACTION: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct TileRecord {
    pub slide_id: String,
    pub mpp: f64,
    pub grid_row: usize,
    pub grid_col: usize,
    pub size: usize,
    /// `size × size` row-major RGB.
    pub pixels: Vec<u8>,
    pub is_background: bool,
}

/// Background rule on a raw RGB buffer: at least 75% of pixels have R, G and B all above 180.
pub fn is_background_pixels(rgb: &[u8]) -> bool {
    let total = rgb.len() / 3;
    let bright = rgb
        .chunks_exact(3)
        .filter(|p| p[0] > BACKGROUND_LEVEL && p[1] > BACKGROUND_LEVEL && p[2] > BACKGROUND_LEVEL)
        .count();
    // bright / total >= 3/4, in integers
    4 * bright >= 3 * total
}

pub fn is_background(tile: &TileRecord) -> bool {
    is_background_pixels(&tile.pixels)
}

/// Cuts a level into non-overlapping `tile_px` squares in (row, col) order.
/// Partial strips on the right and bottom edges are dropped.
pub fn tile_level(slide_id: &str, mpp: f64, level: &RasterImage, tile_px: usize) -> Vec<TileRecord> {
    assert!(tile_px >= 1, "tile size must be positive");
    let rows = level.height / tile_px;
    let cols = level.width / tile_px;
    let mut tiles = Vec::with_capacity(rows * cols);
    let line = tile_px * 3;
    for r in 0..rows {
        for c in 0..cols {
            let mut pixels = Vec::with_capacity(tile_px * line);
            for y in r * tile_px..(r + 1) * tile_px {
                let start = (y * level.width + c * tile_px) * 3;
                pixels.extend_from_slice(&level.pixels[start..start + line]);
            }
            let is_background = is_background_pixels(&pixels);
            tiles.push(TileRecord {
                slide_id: slide_id.into(),
                mpp,
                grid_row: r,
                grid_col: c,
                size: tile_px,
                pixels,
                is_background,
            });
        }
    }
    tiles
}
