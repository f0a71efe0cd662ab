use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numkern::Tensor;

pub const MODALITIES: usize = 4;
pub const MODALITY_NAMES: [&str; MODALITIES] = ["T1", "T1c", "T2", "FLAIR"];

/// Four co-registered MRI modalities on one `[D, H, W]` grid, stored
/// modality-major and row-major within each modality.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume4D {
    extents: [usize; 3],
    data: Vec<f64>,
}

impl Volume4D {
    pub fn new(extents: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let voxels: usize = extents.iter().product();
        if voxels == 0 || data.len() != MODALITIES * voxels {
            return Err(Error::dims(
                "volume",
                &[MODALITIES, extents[0], extents[1], extents[2]],
                &[data.len()],
            ));
        }
        Ok(Volume4D { extents, data })
    }

    pub fn zeros(extents: [usize; 3]) -> Result<Self> {
        Self::new(extents, vec![0.0; MODALITIES * extents.iter().product::<usize>()])
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn voxels(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn modality(&self, m: usize) -> &[f64] {
        let n = self.voxels();
        &self.data[m * n..(m + 1) * n]
    }

    pub fn modality_mut(&mut self, m: usize) -> &mut [f64] {
        let n = self.voxels();
        &mut self.data[m * n..(m + 1) * n]
    }

    #[inline]
    pub fn index(&self, d: usize, h: usize, w: usize) -> usize {
        (d * self.extents[1] + h) * self.extents[2] + w
    }

    pub fn get(&self, m: usize, d: usize, h: usize, w: usize) -> f64 {
        self.data[m * self.voxels() + self.index(d, h, w)]
    }

    pub fn set(&mut self, m: usize, d: usize, h: usize, w: usize, v: f64) {
        let i = m * self.voxels() + self.index(d, h, w);
        self.data[i] = v;
    }

    /// `[4, D, H, W]` tensor view for the classifier.
    pub fn to_tensor(&self) -> Tensor {
        let [d, h, w] = self.extents;
        Tensor::new(vec![MODALITIES, d, h, w], self.data.clone()).expect("volume extents are non-zero")
    }
}

/// Tight bounding box of voxels that are nonzero in any modality.
pub fn crop_foreground(v: &Volume4D) -> Result<Volume4D> {
    let [d, h, w] = v.extents;
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = v.index(z, y, x);
                if (0..MODALITIES).any(|m| v.modality(m)[i] != 0.0) {
                    any = true;
                    for (a, c) in [z, y, x].into_iter().enumerate() {
                        lo[a] = lo[a].min(c);
                        hi[a] = hi[a].max(c);
                    }
                }
            }
        }
    }
    if !any {
        return Err(Error::Input("volume has no nonzero voxel to crop to".into()));
    }
    let ext = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
    let mut out = Vec::with_capacity(MODALITIES * ext.iter().product::<usize>());
    for m in 0..MODALITIES {
        let src = v.modality(m);
        for z in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                let row = v.index(z, y, 0);
                out.extend_from_slice(&src[row + lo[2]..=row + hi[2]]);
            }
        }
    }
    Volume4D::new(ext, out)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Lower neighbor and fraction for a corner-aligned source coordinate.
fn corner_axis(i: usize, n_in: usize, n_out: usize) -> (usize, usize, f64) {
    let src = if n_out == 1 {
        (n_in - 1) as f64 / 2.0
    } else {
        (i * (n_in - 1)) as f64 / (n_out - 1) as f64
    };
    let i0 = libm::floor(src) as usize;
    if i0 >= n_in - 1 {
        (n_in - 1, n_in - 1, 0.0)
    } else {
        (i0, i0 + 1, src - i0 as f64)
    }
}

/// Per-modality trilinear resampling; output corners sample input corners.
pub fn resize_trilinear(v: &Volume4D, target: [usize; 3]) -> Result<Volume4D> {
    if v.extents.iter().any(|&n| n < 2) || target.contains(&0) {
        return Err(Error::dims("resize_trilinear", &v.extents, &target));
    }
    if v.extents == target {
        return Ok(v.clone());
    }
    let [d, h, w] = v.extents;
    let zs: Vec<_> = (0..target[0]).map(|i| corner_axis(i, d, target[0])).collect();
    let ys: Vec<_> = (0..target[1]).map(|i| corner_axis(i, h, target[1])).collect();
    let xs: Vec<_> = (0..target[2]).map(|i| corner_axis(i, w, target[2])).collect();
    let mut out = Vec::with_capacity(MODALITIES * target.iter().product::<usize>());
    for m in 0..MODALITIES {
        let src = v.modality(m);
        let at = |z: usize, y: usize, x: usize| src[(z * h + y) * w + x];
        for &(z0, z1, tz) in &zs {
            for &(y0, y1, ty) in &ys {
                for &(x0, x1, tx) in &xs {
                    let c00 = lerp(at(z0, y0, x0), at(z0, y0, x1), tx);
                    let c01 = lerp(at(z0, y1, x0), at(z0, y1, x1), tx);
                    let c10 = lerp(at(z1, y0, x0), at(z1, y0, x1), tx);
                    let c11 = lerp(at(z1, y1, x0), at(z1, y1, x1), tx);
                    out.push(lerp(lerp(c00, c01, ty), lerp(c10, c11, ty), tz));
                }
            }
        }
    }
    Volume4D::new(target, out)
}

/// Per modality, `(x − μ)/σ` over nonzero voxels; zero voxels stay zero.
pub fn standard_scale_nonzero(v: &Volume4D) -> Result<Volume4D> {
    let mut out = v.clone();
    for m in 0..MODALITIES {
        let ch = out.modality_mut(m);
        let mut n = 0usize;
        let mut sum = 0.0;
        for &x in ch.iter().filter(|&&x| x != 0.0) {
            n += 1;
            sum += x;
        }
        if n == 0 {
            return Err(Error::Input(format!(
                "modality {} has no nonzero voxels",
                MODALITY_NAMES[m]
            )));
        }
        let mean = sum / n as f64;
        let mut ss = 0.0;
        for &x in ch.iter().filter(|&&x| x != 0.0) {
            ss += (x - mean) * (x - mean);
        }
        let std = libm::sqrt(ss / n as f64);
        if !(std > 0.0) {
            return Err(Error::Input(format!(
                "modality {} has constant nonzero voxels",
                MODALITY_NAMES[m]
            )));
        }
        for x in ch.iter_mut().filter(|x| **x != 0.0) {
            *x = (*x - mean) / std;
        }
    }
    Ok(out)
}

/// Crop to the brain, resize to `target`, then scale nonzero voxels.
pub fn preprocess(v: &Volume4D, target: [usize; 3]) -> Result<Volume4D> {
    let cropped = crop_foreground(v)?;
    let resized = resize_trilinear(&cropped, target)?;
    standard_scale_nonzero(&resized)
}

/// Trilinear sample of one modality at a fractional position; neighbors
/// outside the grid count as 0.
pub(crate) fn sample_zero_fill(src: &[f64], ext: [usize; 3], p: [f64; 3]) -> f64 {
    let [d, h, w] = ext;
    let fz = libm::floor(p[0]);
    let fy = libm::floor(p[1]);
    let fx = libm::floor(p[2]);
    let (tz, ty, tx) = (p[0] - fz, p[1] - fy, p[2] - fx);
    let (z0, y0, x0) = (fz as i64, fy as i64, fx as i64);
    if z0 < -1 || y0 < -1 || x0 < -1 || z0 >= d as i64 || y0 >= h as i64 || x0 >= w as i64 {
        return 0.0;
    }
    let at = |z: i64, y: i64, x: i64| {
        if z < 0 || y < 0 || x < 0 || z >= d as i64 || y >= h as i64 || x >= w as i64 {
            0.0
        } else {
            src[((z as usize) * h + y as usize) * w + x as usize]
        }
    };
    let c00 = lerp(at(z0, y0, x0), at(z0, y0, x0 + 1), tx);
    let c01 = lerp(at(z0, y0 + 1, x0), at(z0, y0 + 1, x0 + 1), tx);
    let c10 = lerp(at(z0 + 1, y0, x0), at(z0 + 1, y0, x0 + 1), tx);
    let c11 = lerp(at(z0 + 1, y0 + 1, x0), at(z0 + 1, y0 + 1, x0 + 1), tx);
    lerp(lerp(c00, c01, ty), lerp(c10, c11, ty), tz)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(ext: [usize; 3]) -> Volume4D {
        let n: usize = ext.iter().product();
        let mut data = Vec::new();
        for m in 0..MODALITIES {
            for i in 0..n {
                let z = i / (ext[1] * ext[2]);
                data.push(1.0 + m as f64 + 0.5 * z as f64);
            }
        }
        Volume4D::new(ext, data).unwrap()
    }

    #[test]
    fn crop_single_voxel_and_corners() {
        let mut v = Volume4D::zeros([5, 6, 7]).unwrap();
        v.set(2, 1, 2, 3, 4.0);
        let c = crop_foreground(&v).unwrap();
        assert_eq!(c.extents(), [1, 1, 1]);
        assert_eq!(c.get(2, 0, 0, 0), 4.0);

        let mut v = Volume4D::zeros([5, 6, 7]).unwrap();
        v.set(0, 0, 0, 0, 1.0);
        v.set(3, 4, 5, 6, 1.0);
        assert_eq!(crop_foreground(&v).unwrap(), v);
        assert!(crop_foreground(&Volume4D::zeros([2, 2, 2]).unwrap()).is_err());
    }

    #[test]
    fn resize_constant_identity_and_ramp() {
        let v = Volume4D::new([3, 4, 5], vec![7.0; 4 * 60]).unwrap();
        let r = resize_trilinear(&v, [9, 8, 11]).unwrap();
        assert!(r.data().iter().all(|&x| x == 7.0));
        let v = ramp([6, 3, 4]);
        assert_eq!(resize_trilinear(&v, [6, 3, 4]).unwrap(), v);
        let r = resize_trilinear(&v, [11, 5, 5]).unwrap();
        for z in 0..11 {
            let want = 1.0 + 0.5 * (z as f64 * 5.0 / 10.0);
            assert!((r.get(0, z, 2, 3) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn scale_closed_form() {
        let mut data = vec![0.0; 4 * 8];
        for m in 0..4 {
            data[m * 8] = 1.0;
            data[m * 8 + 5] = 3.0;
        }
        let v = Volume4D::new([2, 2, 2], data).unwrap();
        let s = standard_scale_nonzero(&v).unwrap();
        assert_eq!(s.get(1, 0, 0, 0), -1.0);
        assert_eq!(s.get(1, 1, 0, 1), 1.0);
        assert_eq!(s.get(1, 0, 1, 0), 0.0);

        let flat = Volume4D::new([2, 2, 2], vec![2.0; 32]).unwrap();
        let err = standard_scale_nonzero(&flat).unwrap_err();
        assert!(alloc::format!("{err}").contains("T1"));
    }
}
