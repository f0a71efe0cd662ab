use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::raster::RasterImage;
use super::tile::{tile_level, TileRecord};
use crate::error::{Error, Result};
use crate::label::ClassLabel;

/// Microns-per-pixel ladder: magnifications 40, 20, 10, 5 and 2.5.
pub const MPP_LADDER: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SlidePyramid {
    pub slide_id: String,
    /// Finest first; each level halves the previous one.
    pub levels: Vec<(f64, RasterImage)>,
    pub label: Option<ClassLabel>,
}

impl SlidePyramid {
    pub fn level(&self, mpp: f64) -> Option<&RasterImage> {
        self.levels.iter().find(|(m, _)| *m == mpp).map(|(_, r)| r)
    }

    pub fn mpps(&self) -> Vec<f64> {
        self.levels.iter().map(|(m, _)| *m).collect()
    }

    pub fn tiles(&self, mpp: f64, tile_px: usize) -> Result<Vec<TileRecord>> {
        let level = self.level(mpp).ok_or_else(|| {
            Error::Input(format!("slide {} has no level at {mpp} mpp", self.slide_id))
        })?;
        Ok(tile_level(&self.slide_id, mpp, level, tile_px))
    }
}

/// Halves both dimensions (floor) by averaging 2×2 blocks, rounding half up.
pub fn downsample_box(src: &RasterImage) -> Option<RasterImage> {
    if src.width < 2 || src.height < 2 {
        return None;
    }
    let (w, h) = (src.width / 2, src.height / 2);
    let mut out = vec![0u8; w * h * 3];
    let stride = src.width * 3;
    for y in 0..h {
        let r0 = &src.pixels[2 * y * stride..(2 * y + 1) * stride];
        let r1 = &src.pixels[(2 * y + 1) * stride..(2 * y + 2) * stride];
        let dst = &mut out[y * w * 3..(y + 1) * w * 3];
        for x in 0..w {
            for c in 0..3 {
                let i = 6 * x + c;
                let sum = r0[i] as u32 + r0[i + 3] as u32 + r1[i] as u32 + r1[i + 3] as u32;
                dst[3 * x + c] = ((sum + 2) / 4) as u8;
            }
        }
    }
    Some(RasterImage {
        width: w,
        height: h,
        pixels: out,
        native_mpp: src.native_mpp * 2.0,
    })
}

/// Builds every ladder level at or above the image's native resolution.
///
/// The ladder stops early if a level becomes too small to halve.
pub fn build_pyramid(slide_id: &str, image: RasterImage, label: Option<ClassLabel>) -> Result<SlidePyramid> {
    let start = MPP_LADDER
        .iter()
        .position(|&m| m == image.native_mpp)
        .ok_or_else(|| {
            Error::Input(format!(
                "native mpp {} is not on the ladder {MPP_LADDER:?}",
                image.native_mpp
            ))
        })?;
    let mut levels = Vec::with_capacity(MPP_LADDER.len() - start);
    let mut current = image;
    for (i, &mpp) in MPP_LADDER.iter().enumerate().skip(start) {
        let next = if i + 1 < MPP_LADDER.len() {
            downsample_box(&current)
        } else {
            None
        };
        let mut level = current;
        level.native_mpp = mpp;
        levels.push((mpp, level));
        match next {
            Some(n) => current = n,
            None => break,
        }
    }
    Ok(SlidePyramid {
        slide_id: slide_id.into(),
        levels,
        label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_stays_constant() {
        let img = RasterImage::filled(64, 48, [10, 200, 77], 0.5).unwrap();
        let p = build_pyramid("s", img, None).unwrap();
        assert_eq!(p.mpps(), vec![0.5, 1.0, 2.0, 4.0]);
        for (_, level) in &p.levels {
            assert!(level.pixels.chunks(3).all(|px| px == [10, 200, 77]));
        }
        assert_eq!(p.level(4.0).unwrap().width, 8);
        assert_eq!(p.level(4.0).unwrap().height, 6);
    }

    #[test]
    fn checkerboard_rounds_half_up() {
        let mut img = RasterImage::filled(4, 4, [0, 0, 0], 0.25).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                if (x + y) % 2 == 0 {
                    img.set_pixel(x, y, [255, 255, 255]);
                }
            }
        }
        let half = downsample_box(&img).unwrap();
        assert_eq!((half.width, half.height), (2, 2));
        assert!(half.pixels.iter().all(|&v| v == 128));
    }

    #[test]
    fn ladder_stops_when_too_small() {
        let img = RasterImage::filled(5, 9, [1, 2, 3], 0.25).unwrap();
        let p = build_pyramid("s", img, None).unwrap();
        // 5x9 -> 2x4 -> 1x2 -> stop
        assert_eq!(p.mpps(), vec![0.25, 0.5, 1.0]);
    }

    #[test]
    fn off_ladder_mpp_rejected() {
        let img = RasterImage::filled(4, 4, [1, 2, 3], 0.3).unwrap();
        assert!(build_pyramid("s", img, None).is_err());
    }
}
