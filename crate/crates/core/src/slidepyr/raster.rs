use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major 8-bit RGB raster with its physical resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    /// Microns per pixel.
    pub native_mpp: f64,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, native_mpp: f64) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::Input(format!(
                "{width}x{height} RGB raster needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        if !(native_mpp > 0.0) {
            return Err(Error::Input(format!("mpp must be positive, got {native_mpp}")));
        }
        Ok(RasterImage {
            width,
            height,
            pixels,
            native_mpp,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3], native_mpp: f64) -> Result<Self> {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        RasterImage::new(width, height, pixels, native_mpp)
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}
