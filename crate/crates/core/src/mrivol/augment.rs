//! Spatial augmentation about the volume center with trilinear resampling and
//! zero fill outside the source grid.

use alloc::vec::Vec;

use rand::Rng;

use super::volume::{sample_zero_fill, Volume4D, MODALITIES};
use crate::error::Result;

pub const ZOOM_RANGE: (f64, f64) = (0.8, 1.2);
pub const MAX_ROTATION_DEG: f64 = 10.0;

fn center(ext: [usize; 3]) -> [f64; 3] {
    [
        (ext[0] - 1) as f64 / 2.0,
        (ext[1] - 1) as f64 / 2.0,
        (ext[2] - 1) as f64 / 2.0,
    ]
}

/// Resamples every modality with `src = map(dst)` on the same grid.
fn remap<F: Fn([f64; 3]) -> [f64; 3]>(v: &Volume4D, map: F) -> Result<Volume4D> {
    let ext = v.extents();
    let n = v.voxels();
    let mut coords = Vec::with_capacity(n);
    for z in 0..ext[0] {
        for y in 0..ext[1] {
            for x in 0..ext[2] {
                coords.push(map([z as f64, y as f64, x as f64]));
            }
        }
    }
    let mut out = Vec::with_capacity(MODALITIES * n);
    for m in 0..MODALITIES {
        let src = v.modality(m);
        out.extend(coords.iter().map(|&p| sample_zero_fill(src, ext, p)));
    }
    Volume4D::new(ext, out)
}

/// Isotropic zoom by `factor`: structures grow for `factor > 1`.
pub fn zoom(v: &Volume4D, factor: f64) -> Result<Volume4D> {
    let c = center(v.extents());
    remap(v, |p| {
        [
            c[0] + (p[0] - c[0]) / factor,
            c[1] + (p[1] - c[1]) / factor,
            c[2] + (p[2] - c[2]) / factor,
        ]
    })
}

type Mat3 = [[f64; 3]; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    r
}

fn axis_rotation(axis: usize, rad: f64) -> Mat3 {
    let (s, c) = (libm::sin(rad), libm::cos(rad));
    let (i, j) = match axis {
        0 => (1, 2),
        1 => (2, 0),
        _ => (0, 1),
    };
    let mut r = [[0.0; 3]; 3];
    r[axis][axis] = 1.0;
    r[i][i] = c;
    r[j][j] = c;
    r[i][j] = -s;
    r[j][i] = s;
    r
}

/// Rotation matrix for intrinsic angles (degrees) about the d, h and w axes, in that order.
pub fn rotation_matrix(angles_deg: [f64; 3]) -> Mat3 {
    let rad = |a: f64| a * core::f64::consts::PI / 180.0;
    let r = mat_mul(&axis_rotation(0, rad(angles_deg[0])), &axis_rotation(1, rad(angles_deg[1])));
    mat_mul(&r, &axis_rotation(2, rad(angles_deg[2])))
}

/// Rotates about the volume center; each output voxel samples `R⁻¹ (x − c) + c`.
pub fn rotate(v: &Volume4D, angles_deg: [f64; 3]) -> Result<Volume4D> {
    let r = rotation_matrix(angles_deg);
    let c = center(v.extents());
    remap(v, |p| {
        let q = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
        // R⁻¹ = Rᵀ
        let mut s = c;
        for (i, si) in s.iter_mut().enumerate() {
            *si += r[0][i] * q[0] + r[1][i] * q[1] + r[2][i] * q[2];
        }
        s
    })
}

pub fn random_zoom<R: Rng + ?Sized>(v: &Volume4D, rng: &mut R) -> Result<Volume4D> {
    let f = rng.gen_range(ZOOM_RANGE.0..=ZOOM_RANGE.1);
    zoom(v, f)
}

pub fn random_rotate<R: Rng + ?Sized>(v: &Volume4D, rng: &mut R) -> Result<Volume4D> {
    let mut a = [0.0; 3];
    for x in &mut a {
        *x = rng.gen_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG);
    }
    rotate(v, a)
}

/// Training-time augmentation: zoom, then rotation.
pub fn augment_volume<R: Rng + ?Sized>(v: &Volume4D, rng: &mut R) -> Result<Volume4D> {
    let z = random_zoom(v, rng)?;
    random_rotate(&z, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn cube(n: usize, half: usize) -> Volume4D {
        let mut v = Volume4D::zeros([n, n, n]).unwrap();
        let c = n / 2;
        for z in c - half..c + half {
            for y in c - half..c + half {
                for x in c - half..c + half {
                    for m in 0..MODALITIES {
                        v.set(m, z, y, x, 1.0 + m as f64);
                    }
                }
            }
        }
        v
    }

    fn blob(n: usize) -> Volume4D {
        let mut v = Volume4D::zeros([n, n, n]).unwrap();
        let c = (n - 1) as f64 / 2.0;
        let sigma = n as f64 / 6.0;
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let r2 = (z as f64 - c).powi(2) + (y as f64 - c).powi(2) + (x as f64 - c).powi(2);
                    let val = libm::exp(-r2 / (2.0 * sigma * sigma));
                    for m in 0..MODALITIES {
                        v.set(m, z, y, x, val);
                    }
                }
            }
        }
        v
    }

    #[test]
    fn centers_are_identity() {
        let v = blob(9);
        for (a, b) in zoom(&v, 1.0).unwrap().data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in rotate(&v, [0.0; 3]).unwrap().data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zoom_shrinks_cube() {
        let v = cube(40, 10);
        let z = zoom(&v, 0.8).unwrap();
        // count of voxels above half intensity along the central row
        let row = |vol: &Volume4D| (0..40).filter(|&x| vol.get(0, 20, 20, x) > 0.5).count();
        let before = row(&v) as f64;
        let after = row(&z) as f64;
        assert!((after / before - 0.8).abs() <= 0.1, "{before} {after}");
    }

    #[test]
    fn rotation_keeps_symmetric_blob() {
        let v = blob(33);
        let r = rotate(&v, [10.0, -7.0, 4.0]).unwrap();
        let worst = r.data().iter().zip(v.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 0.02, "{worst}");
    }

    #[test]
    fn seeded_augmentation_repeats() {
        let v = cube(12, 3);
        let a = augment_volume(&v, &mut seed::rng(5, &[1])).unwrap();
        let b = augment_volume(&v, &mut seed::rng(5, &[1])).unwrap();
        assert_eq!(a, b);
    }
}
