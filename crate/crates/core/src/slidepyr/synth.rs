//! Synthetic H&E-like slides.
//!
//! A slide is a white (≈ 240) background with one large central tissue
//! region plus a few satellite islands, all with a noisy boundary. Tissue is
//! filled with a class-specific stain color, per-pixel grain and round
//! "nuclei":
//!
//! | class | stroma RGB      | grain | nuclei RGB     | nuclei / 10⁴ px | radius |
//! |-------|-----------------|-------|----------------|-----------------|--------|
//! | A     | (236, 164, 196) | ±10   | (128, 64, 150) | 12              | 3      |
//! | O     | (206, 178, 228) | ±10   | ( 92, 52, 140) | 40              | 4      |
//! | G     | (178, 104, 168) | ±16   | ( 66, 28, 96)  | 80              | 3      |
//!
//! O nuclei carry a pale perinuclear halo. The central region alone covers
//! about 40% of the slide, so at least a quarter of native tiles are tissue
//! and the coarsest tile of a 4096² slide is never background.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::raster::RasterImage;
use crate::label::ClassLabel;
use crate::seed;

struct Profile {
    stroma: [f64; 3],
    grain: f64,
    nucleus: [f64; 3],
    nuclei_per_10k: f64,
    radius: i64,
    halo: bool,
}

fn profile(label: ClassLabel) -> Profile {
    match label {
        ClassLabel::A => Profile {
            stroma: [236.0, 164.0, 196.0],
            grain: 10.0,
            nucleus: [128.0, 64.0, 150.0],
            nuclei_per_10k: 12.0,
            radius: 3,
            halo: false,
        },
        ClassLabel::O => Profile {
            stroma: [206.0, 178.0, 228.0],
            grain: 10.0,
            nucleus: [92.0, 52.0, 140.0],
            nuclei_per_10k: 40.0,
            radius: 4,
            halo: true,
        },
        ClassLabel::G => Profile {
            stroma: [178.0, 104.0, 168.0],
            grain: 16.0,
            nucleus: [66.0, 28.0, 96.0],
            nuclei_per_10k: 80.0,
            radius: 3,
            halo: false,
        },
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform value in `[0, 1)` from a hash.
fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Bilinear value noise on a lattice of spacing `cell` pixels, in `[0, 1)`.
struct ValueNoise {
    cell: f64,
    cols: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(seed: u64, width: usize, height: usize, cell: f64) -> Self {
        let cols = (width as f64 / cell) as usize + 2;
        let rows = (height as f64 / cell) as usize + 2;
        let lattice = (0..rows * cols)
            .map(|i| unit(mix(seed ^ mix(i as u64))))
            .collect();
        ValueNoise { cell, cols, lattice }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let gx = x / self.cell;
        let gy = y / self.cell;
        let x0 = libm::floor(gx);
        let y0 = libm::floor(gy);
        let fx = gx - x0;
        let fy = gy - y0;
        let i = y0 as usize * self.cols + x0 as usize;
        let (v00, v10) = (self.lattice[i], self.lattice[i + 1]);
        let (v01, v11) = (self.lattice[i + self.cols], self.lattice[i + self.cols + 1]);
        let a = v00 + (v10 - v00) * fx;
        let b = v01 + (v11 - v01) * fx;
        a + (b - a) * fy
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    inv_rx2: f64,
    inv_ry2: f64,
}

impl Ellipse {
    fn level(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        dx * dx * self.inv_rx2 + dy * dy * self.inv_ry2
    }
}

/// Renders a deterministic synthetic slide for `(seed, label, size)`.
pub fn synth_slide(seed_value: u64, label: ClassLabel, width: usize, height: usize, native_mpp: f64) -> RasterImage {
    assert!(width >= 1024 && height >= 1024, "synthetic slides are at least 1024 px wide and high");
    let prof = profile(label);
    let mut rng = seed::rng(seed_value, &[seed::tag::SYNTH_SLIDE]);
    let (w, h) = (width as f64, height as f64);

    let mut blobs = vec![Ellipse {
        cx: w * rng.gen_range(0.46..0.54),
        cy: h * rng.gen_range(0.46..0.54),
        inv_rx2: 1.0 / libm::pow(w * rng.gen_range(0.37..0.40), 2.0),
        inv_ry2: 1.0 / libm::pow(h * rng.gen_range(0.35..0.38), 2.0),
    }];
    for _ in 0..3 {
        let r = rng.gen_range(0.04..0.08);
        blobs.push(Ellipse {
            cx: w * rng.gen_range(0.08..0.92),
            cy: h * rng.gen_range(0.08..0.92),
            inv_rx2: 1.0 / libm::pow(w * r, 2.0),
            inv_ry2: 1.0 / libm::pow(h * r * rng.gen_range(0.7..1.3), 2.0),
        });
    }
    let boundary = ValueNoise::new(rng.gen::<u64>(), width, height, (w.min(h) / 16.0).max(8.0));
    let grain_seed = rng.gen::<u64>();

    let mut pixels = vec![0u8; width * height * 3];
    let mut tissue = vec![false; width * height];
    for y in 0..height {
        let fy = y as f64;
        for x in 0..width {
            let fx = x as f64;
            let i = y * width + x;
            let wobble = 0.3 * (boundary.at(fx, fy) - 0.5);
            let inside = blobs.iter().any(|b| b.level(fx, fy) + wobble <= 1.0);
            let g = unit(mix(grain_seed ^ i as u64)) - 0.5;
            let px = &mut pixels[i * 3..i * 3 + 3];
            if inside {
                tissue[i] = true;
                for c in 0..3 {
                    px[c] = (prof.stroma[c] + 2.0 * prof.grain * g).clamp(0.0, 255.0) as u8;
                }
            } else {
                let v = (240.0 + 20.0 * g).clamp(0.0, 255.0) as u8;
                px.copy_from_slice(&[v, v, v]);
            }
        }
    }

    let area = (width * height) as f64;
    let nuclei = (area * prof.nuclei_per_10k / 1e4) as usize;
    let r = prof.radius;
    for _ in 0..nuclei {
        let cx = rng.gen_range(0..width) as i64;
        let cy = rng.gen_range(0..height) as i64;
        if !tissue[cy as usize * width + cx as usize] {
            continue;
        }
        let outer = if prof.halo { r + 2 } else { r };
        for dy in -outer..=outer {
            for dx in -outer..=outer {
                let (x, y) = (cx + dx, cy + dy);
                if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
                    continue;
                }
                let d2 = dx * dx + dy * dy;
                let idx = y as usize * width + x as usize;
                if !tissue[idx] || d2 > outer * outer {
                    continue;
                }
                let color = if d2 <= r * r {
                    prof.nucleus
                } else {
                    [238.0, 226.0, 242.0]
                };
                for c in 0..3 {
                    pixels[idx * 3 + c] = color[c] as u8;
                }
            }
        }
    }

    RasterImage::new(width, height, pixels, native_mpp).expect("buffer sized for raster")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slidepyr::{build_pyramid, tile_level};

    #[test]
    fn deterministic_and_tissue_rich() {
        let a = synth_slide(11, ClassLabel::O, 1024, 1024, 0.5);
        let b = synth_slide(11, ClassLabel::O, 1024, 1024, 0.5);
        assert_eq!(a, b);
        let c = synth_slide(12, ClassLabel::O, 1024, 1024, 0.5);
        assert_ne!(a, c);
    }

    #[test]
    fn every_level_has_foreground() {
        for label in ClassLabel::ALL {
            let img = synth_slide(3, label, 2048, 2048, 0.5);
            let p = build_pyramid("s", img, Some(label)).unwrap();
            let native = tile_level("s", 0.5, p.level(0.5).unwrap(), 512);
            let fg = native.iter().filter(|t| !t.is_background).count();
            assert!(4 * fg >= native.len(), "{label}: {fg}/{}", native.len());
            for (mpp, level) in &p.levels {
                let tiles = tile_level("s", *mpp, level, 512);
                if !tiles.is_empty() {
                    assert!(tiles.iter().any(|t| !t.is_background), "{label} at {mpp}");
                }
            }
        }
    }
}
