use alloc::vec;

use crate::error::{Error, Result};
use crate::numkern::conv::{self, ConvGeometry, Dims};
use crate::numkern::Tensor;

/// Cubic 3-D convolution layer: weights `[Cout, Cin, k, k, k]`, bias `[Cout]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3dSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Conv3dSpec {
    pub fn new(weights: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        let ws = weights.shape();
        if ws.len() != 5 || ws[2] != ws[3] || ws[3] != ws[4] {
            return Err(Error::Config(alloc::format!(
                "conv3d weights must be [Cout, Cin, k, k, k], got {ws:?}"
            )));
        }
        if bias.numel() != ws[0] {
            return Err(Error::dims("conv3d bias", &[ws[0]], bias.shape()));
        }
        if stride == 0 {
            return Err(Error::Config("conv3d stride must be positive".into()));
        }
        Ok(Conv3dSpec {
            kernel: ws[2],
            stride,
            padding,
            in_channels: ws[1],
            out_channels: ws[0],
            weights,
            bias,
        })
    }

    /// All-zero layer with the given geometry.
    pub fn zeros(g: ConvGeometry) -> Result<Self> {
        let w = Tensor::zeros(&g.weight_shape())?;
        let b = Tensor::zeros(&[g.out_channels])?;
        Self::new(w, b, g.stride, g.padding)
    }

    pub fn geometry(&self) -> ConvGeometry {
        ConvGeometry {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 4]> {
        self.geometry().output_shape(input)
    }
}

/// `[Cin, D, H, W] → [Cout, D', H', W']` with `D' = ⌊(D + 2p − k)/s⌋ + 1`.
pub fn conv3d_forward(x: &Tensor, spec: &Conv3dSpec) -> Result<Tensor> {
    let g = spec.geometry();
    let dims = Dims::new(&g, x.shape())?;
    let out = conv::forward(&g, &dims, x.data(), spec.weights.data(), spec.bias.data());
    Tensor::new(vec![dims.out[0], dims.out[1], dims.out[2], dims.out[3]], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_kernel_is_identity() {
        let spec = Conv3dSpec::new(Tensor::full(&[1, 1, 1, 1, 1], 1.0).unwrap(), Tensor::zeros(&[1]).unwrap(), 1, 0).unwrap();
        let x = Tensor::new(vec![1, 2, 3, 4], (0..24).map(|i| i as f64 * 0.5).collect()).unwrap();
        assert_eq!(conv3d_forward(&x, &spec).unwrap(), x);
    }

    #[test]
    fn ones_kernel_counts_neighbors() {
        let spec = Conv3dSpec::new(Tensor::full(&[1, 1, 3, 3, 3], 1.0).unwrap(), Tensor::zeros(&[1]).unwrap(), 1, 1).unwrap();
        let x = Tensor::full(&[1, 5, 5, 5], 1.0).unwrap();
        let y = conv3d_forward(&x, &spec).unwrap();
        assert_eq!(y.shape(), &[1, 5, 5, 5]);
        for d in 1..4 {
            for h in 1..4 {
                for w in 1..4 {
                    assert_eq!(y.data()[(d * 5 + h) * 5 + w], 27.0);
                }
            }
        }
        assert_eq!(y.data()[0], 8.0);
    }

    #[test]
    fn rejects_non_cubic_and_channel_mismatch() {
        assert!(Conv3dSpec::new(Tensor::zeros(&[1, 1, 3, 3, 2]).unwrap(), Tensor::zeros(&[1]).unwrap(), 1, 0).is_err());
        let spec = Conv3dSpec::zeros(ConvGeometry { in_channels: 4, out_channels: 2, kernel: 3, stride: 1, padding: 0 }).unwrap();
        let x = Tensor::zeros(&[3, 4, 4, 4]).unwrap();
        assert!(matches!(conv3d_forward(&x, &spec), Err(Error::Dimension { .. })));
    }
}
