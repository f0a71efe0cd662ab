//! Direct 3-D convolution over `[C, D, H, W]` volumes with cubic kernels.
//!
//! Each output voxel accumulates `bias` then the products in ascending
//! `(c_in, kd, kh, kw)` order.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Geometry of a cubic-kernel convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn weight_shape(&self) -> [usize; 5] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel, self.kernel]
    }

    /// `floor((n + 2p − k)/s) + 1`, or `None` when the padded extent is smaller than the kernel.
    pub fn output_extent(&self, n: usize) -> Option<usize> {
        let padded = n + 2 * self.padding;
        if self.stride == 0 || self.kernel == 0 || padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 4]> {
        let bad = || {
            Error::dims(
                "conv3d",
                input,
                &[self.in_channels, self.kernel, self.stride, self.padding],
            )
        };
        let [c, d, h, w] = <[usize; 4]>::try_from(input).map_err(|_| bad())?;
        if c != self.in_channels {
            return Err(bad());
        }
        Ok([
            self.out_channels,
            self.output_extent(d).ok_or_else(bad)?,
            self.output_extent(h).ok_or_else(bad)?,
            self.output_extent(w).ok_or_else(bad)?,
        ])
    }

    /// Output indices `o` with `o*s + k − p` inside `[0, n)`, as a half-open range.
    fn valid_range(&self, k: usize, n: usize, out_n: usize) -> (usize, usize) {
        let s = self.stride;
        let p = self.padding;
        let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
        // o*s + k - p <= n - 1  <=>  o <= (n - 1 + p - k)/s
        let hi = if n + p > k { ((n - 1 + p - k) / s + 1).min(out_n) } else { 0 };
        (lo, hi.max(lo))
    }
}

pub(crate) struct Dims {
    pub(crate) inp: [usize; 4],
    pub(crate) out: [usize; 4],
}

impl Dims {
    pub(crate) fn new(g: &ConvGeometry, inp: &[usize]) -> Result<Self> {
        let out = g.output_shape(inp)?;
        Ok(Dims {
            inp: [inp[0], inp[1], inp[2], inp[3]],
            out,
        })
    }
}

/// Iterates every (output row, input row, kernel tap) triple touched by the
/// convolution and hands the caller aligned slices.
#[inline]
fn for_each_tap<F>(g: &ConvGeometry, dims: &Dims, mut f: F)
where
    F: FnMut(usize, usize, usize, usize, usize, usize),
{
    let [_, d, h, w] = dims.inp;
    let [_, od_n, oh_n, ow_n] = dims.out;
    let k = g.kernel;
    let s = g.stride;
    let p = g.padding;
    for kd in 0..k {
        let (od_lo, od_hi) = g.valid_range(kd, d, od_n);
        for kh in 0..k {
            let (oh_lo, oh_hi) = g.valid_range(kh, h, oh_n);
            for kw in 0..k {
                let (ow_lo, ow_hi) = g.valid_range(kw, w, ow_n);
                if ow_lo >= ow_hi {
                    continue;
                }
                let tap = (kd * k + kh) * k + kw;
                for od in od_lo..od_hi {
                    let id = od * s + kd - p;
                    for oh in oh_lo..oh_hi {
                        let ih = oh * s + kh - p;
                        let out_row = (od * oh_n + oh) * ow_n;
                        let in_row = (id * h + ih) * w;
                        f(tap, out_row, in_row, ow_lo, ow_hi, kw);
                    }
                }
            }
        }
    }
}

pub(crate) fn forward(
    g: &ConvGeometry,
    dims: &Dims,
    x: &[f64],
    weight: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let [cin, d, h, w] = dims.inp;
    let [cout, od_n, oh_n, ow_n] = dims.out;
    let in_vol = d * h * w;
    let out_vol = od_n * oh_n * ow_n;
    let taps = g.kernel * g.kernel * g.kernel;
    let (s, p) = (g.stride, g.padding);
    let mut out = vec![0.0; cout * out_vol];
    for co in 0..cout {
        let o = &mut out[co * out_vol..(co + 1) * out_vol];
        o.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..cin {
            let xc = &x[ci * in_vol..(ci + 1) * in_vol];
            let wk = &weight[(co * cin + ci) * taps..(co * cin + ci + 1) * taps];
            for_each_tap(g, dims, |tap, out_row, in_row, lo, hi, kw| {
                let wv = wk[tap];
                let orow = &mut o[out_row..out_row + ow_n];
                let irow = &xc[in_row..in_row + w];
                for ow in lo..hi {
                    orow[ow] += wv * irow[ow * s + kw - p];
                }
            });
        }
    }
    out
}

/// Accumulates weight, bias and (optionally) input gradients.
pub(crate) fn backward(
    g: &ConvGeometry,
    dims: &Dims,
    x: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    mut grad_x: Option<&mut [f64]>,
    grad_w: Option<&mut [f64]>,
    grad_b: Option<&mut [f64]>,
) {
    let [cin, d, h, w] = dims.inp;
    let [cout, od_n, oh_n, ow_n] = dims.out;
    let in_vol = d * h * w;
    let out_vol = od_n * oh_n * ow_n;
    let taps = g.kernel * g.kernel * g.kernel;
    let (s, p) = (g.stride, g.padding);

    if let Some(gb) = grad_b {
        for co in 0..cout {
            let mut acc = 0.0;
            for &v in &grad_out[co * out_vol..(co + 1) * out_vol] {
                acc += v;
            }
            gb[co] += acc;
        }
    }

    let mut grad_w = grad_w;
    for co in 0..cout {
        let go = &grad_out[co * out_vol..(co + 1) * out_vol];
        for ci in 0..cin {
            let xc = &x[ci * in_vol..(ci + 1) * in_vol];
            let wbase = (co * cin + ci) * taps;
            if let Some(gw) = grad_w.as_deref_mut() {
                let gwk = &mut gw[wbase..wbase + taps];
                for_each_tap(g, dims, |tap, out_row, in_row, lo, hi, kw| {
                    let orow = &go[out_row..out_row + ow_n];
                    let irow = &xc[in_row..in_row + w];
                    let mut acc = 0.0;
                    for ow in lo..hi {
                        acc += orow[ow] * irow[ow * s + kw - p];
                    }
                    gwk[tap] += acc;
                });
            }
            if let Some(gx) = grad_x.as_deref_mut() {
                let wk = &weight[wbase..wbase + taps];
                let gxc = &mut gx[ci * in_vol..(ci + 1) * in_vol];
                for_each_tap(g, dims, |tap, out_row, in_row, lo, hi, kw| {
                    let wv = wk[tap];
                    let orow = &go[out_row..out_row + ow_n];
                    let irow = &mut gxc[in_row..in_row + w];
                    for ow in lo..hi {
                        irow[ow * s + kw - p] += wv * orow[ow];
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_extent_formula() {
        let g = ConvGeometry {
            in_channels: 4,
            out_channels: 64,
            kernel: 7,
            stride: 2,
            padding: 3,
        };
        assert_eq!(g.output_extent(128), Some(64));
        assert_eq!(g.output_extent(8), Some(4));
        assert_eq!(g.output_shape(&[4, 128, 128, 128]).unwrap(), [64, 64, 64, 64]);
        assert!(g.output_shape(&[3, 128, 128, 128]).is_err());
        let tight = ConvGeometry { padding: 0, ..g };
        assert_eq!(tight.output_extent(6), None);
    }
}
