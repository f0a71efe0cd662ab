//! Tile augmentation: random crop, color jitter and channel normalization.
//!
//! Jitter is applied in a fixed order on `[0, 1]` values, clamping after
//! each step:
//! * brightness: `x ← x·f_b`
//! * contrast: `x ← m + (x − m)·f_c`, `m` the mean luma of the crop
//! * saturation: `x ← y + (x − y)·f_s`, `y` the pixel's own luma
//! * hue: rotate the HSV hue by `h` turns
//!
//! with luma `0.299R + 0.587G + 0.114B`. A factor of exactly 1 (or a hue
//! shift of exactly 0) skips its step.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::stats::ChannelStats;
use super::tile::TileRecord;
use crate::numkern::Tensor;

pub const CROP_PX: usize = 224;
/// Brightness, contrast and saturation factors are drawn from `[1 − m, 1 + m]`.
pub const JITTER_MAGNITUDE: f64 = 0.1;
/// Hue shift in turns is drawn from `[−m, m]`.
pub const HUE_MAGNITUDE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub crop: usize,
    pub offset_row: usize,
    pub offset_col: usize,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl AugmentParams {
    /// Center crop, no jitter.
    pub fn eval(tile_size: usize, crop: usize) -> Self {
        let off = (tile_size - crop) / 2;
        AugmentParams {
            crop,
            offset_row: off,
            offset_col: off,
            brightness: 1.0,
            contrast: 1.0,
            saturation: 1.0,
            hue: 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, tile_size: usize, crop: usize) -> Self {
        let span = tile_size - crop;
        let lo = 1.0 - JITTER_MAGNITUDE;
        let hi = 1.0 + JITTER_MAGNITUDE;
        AugmentParams {
            crop,
            offset_row: rng.gen_range(0..=span),
            offset_col: rng.gen_range(0..=span),
            brightness: rng.gen_range(lo..=hi),
            contrast: rng.gen_range(lo..=hi),
            saturation: rng.gen_range(lo..=hi),
            hue: rng.gen_range(-HUE_MAGNITUDE..=HUE_MAGNITUDE),
        }
    }
}

fn luma(p: &[f64]) -> f64 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn rotate_hue(p: &mut [f64], shift: f64) {
    let (r, g, b) = (p[0], p[1], p[2]);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if delta <= 0.0 {
        return;
    }
    let v = max;
    let s = delta / max;
    let mut h = if max == r {
        (g - b) / delta
    } else if max == g {
        2.0 + (b - r) / delta
    } else {
        4.0 + (r - g) / delta
    } / 6.0;
    h += shift;
    h -= libm::floor(h);
    let h6 = h * 6.0;
    let sector = libm::floor(h6);
    let f = h6 - sector;
    let pp = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (nr, ng, nb) = match sector as i32 % 6 {
        0 => (v, t, pp),
        1 => (q, v, pp),
        2 => (pp, v, t),
        3 => (pp, q, v),
        4 => (t, pp, v),
        _ => (v, pp, q),
    };
    p[0] = nr;
    p[1] = ng;
    p[2] = nb;
}

/// Writes the augmented, normalized `crop × crop × 3` tensor of an RGB tile into `out`.
pub fn augment_with(pixels: &[u8], tile_size: usize, params: &AugmentParams, stats: &ChannelStats, out: &mut [f64]) {
    let crop = params.crop;
    debug_assert_eq!(out.len(), crop * crop * 3);
    for y in 0..crop {
        let src = ((params.offset_row + y) * tile_size + params.offset_col) * 3;
        let row = &pixels[src..src + crop * 3];
        for (o, &v) in out[y * crop * 3..(y + 1) * crop * 3].iter_mut().zip(row) {
            *o = v as f64 / 255.0;
        }
    }
    if params.brightness != 1.0 {
        for v in out.iter_mut() {
            *v = clamp01(*v * params.brightness);
        }
    }
    if params.contrast != 1.0 {
        let mut sum = 0.0;
        for p in out.chunks_exact(3) {
            sum += luma(p);
        }
        let m = sum / (crop * crop) as f64;
        for v in out.iter_mut() {
            *v = clamp01(m + (*v - m) * params.contrast);
        }
    }
    if params.saturation != 1.0 {
        for p in out.chunks_exact_mut(3) {
            let y = luma(p);
            for v in p.iter_mut() {
                *v = clamp01(y + (*v - y) * params.saturation);
            }
        }
    }
    if params.hue != 0.0 {
        for p in out.chunks_exact_mut(3) {
            rotate_hue(p, params.hue);
        }
    }
    let inv_std = [1.0 / stats.std[0], 1.0 / stats.std[1], 1.0 / stats.std[2]];
    for p in out.chunks_exact_mut(3) {
        for c in 0..3 {
            p[c] = (p[c] - stats.mean[c]) * inv_std[c];
        }
    }
}

/// Train mode draws a random crop and jitter; eval mode center-crops only.
pub fn augment_tile<R: Rng + ?Sized>(tile: &TileRecord, stats: &ChannelStats, rng: &mut R, train: bool) -> Tensor {
    augment_tile_crop(tile, stats, rng, train, CROP_PX.min(tile.size))
}

pub(crate) fn augment_tile_crop<R: Rng + ?Sized>(
    tile: &TileRecord,
    stats: &ChannelStats,
    rng: &mut R,
    train: bool,
    crop: usize,
) -> Tensor {
    let params = if train {
        AugmentParams::sample(rng, tile.size, crop)
    } else {
        AugmentParams::eval(tile.size, crop)
    };
    let mut out: Vec<f64> = vec![0.0; crop * crop * 3];
    augment_with(&tile.pixels, tile.size, &params, stats, &mut out);
    Tensor::new(vec![crop, crop, 3], out).expect("crop shape")
}
