use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::conv::Conv3dSpec;
use super::volume::{Volume4D, MODALITIES};
use crate::error::{Error, Result};
use crate::milnet::model::glorot;
use crate::numkern::conv::ConvGeometry;
use crate::numkern::{softmax, Graph, Tensor, Var};
use crate::seed;

/// Shape of the volumetric classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MriArch {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub classes: usize,
}

impl Default for MriArch {
    fn default() -> Self {
        MriArch {
            in_channels: MODALITIES,
            out_channels: 64,
            kernel: 7,
            stride: 2,
            padding: 3,
            classes: crate::NUM_CLASSES,
        }
    }
}

impl MriArch {
    pub fn geometry(&self) -> ConvGeometry {
        ConvGeometry {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
        }
    }

    pub fn param_count(&self) -> usize {
        let k3 = self.kernel * self.kernel * self.kernel;
        self.out_channels * self.in_channels * k3 + self.out_channels + self.out_channels * self.classes + self.classes
    }
}

/// `conv3d → relu → global average pool → linear → softmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct MriClassifier {
    pub conv: Conv3dSpec,
    pub head_weight: Tensor,
    pub head_bias: Tensor,
}

impl MriClassifier {
    /// Seed-derived Glorot-uniform weights, zero biases.
    pub fn init(arch: &MriArch, seed_value: u64) -> Result<Self> {
        if arch.out_channels == 0 || arch.classes == 0 || arch.kernel == 0 || arch.in_channels == 0 {
            return Err(Error::Config(format!("invalid classifier shape {arch:?}")));
        }
        let mut rng = seed::rng(seed_value, &[seed::tag::INIT]);
        let g = arch.geometry();
        let k3 = arch.kernel * arch.kernel * arch.kernel;
        let bound = libm::sqrt(6.0 / ((arch.in_channels + arch.out_channels) * k3) as f64);
        let w: Vec<f64> = (0..arch.out_channels * arch.in_channels * k3)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        let conv = Conv3dSpec::new(
            Tensor::new(g.weight_shape().to_vec(), w)?,
            Tensor::zeros(&[arch.out_channels])?,
            arch.stride,
            arch.padding,
        )?;
        Ok(MriClassifier {
            conv,
            head_weight: glorot(arch.out_channels, arch.classes, &mut rng)?,
            head_bias: Tensor::zeros(&[arch.classes])?,
        })
    }

    pub fn arch(&self) -> MriArch {
        MriArch {
            in_channels: self.conv.in_channels,
            out_channels: self.conv.out_channels,
            kernel: self.conv.kernel,
            stride: self.conv.stride,
            padding: self.conv.padding,
            classes: self.classes(),
        }
    }

    pub fn classes(&self) -> usize {
        self.head_bias.numel()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        alloc::vec![&self.conv.weights, &self.conv.bias, &self.head_weight, &self.head_bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        alloc::vec![
            &mut self.conv.weights,
            &mut self.conv.bias,
            &mut self.head_weight,
            &mut self.head_bias
        ]
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.params().iter().map(|t| t.numel()).collect()
    }

    pub fn param_vector(&self) -> Vec<f64> {
        self.params().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_param_vector(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.param_sizes().iter().sum();
        if flat.len() != total {
            return Err(Error::dims("parameter vector", &[total], &[flat.len()]));
        }
        let mut offset = 0;
        for t in self.params_mut() {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn register(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect()
    }

    /// Logits `[C]` for one `[Cin, D, H, W]` input inside `g`.
    pub fn logits_in(&self, g: &mut Graph, vars: &[Var], x: Tensor) -> Result<Var> {
        let x = g.constant(x);
        let h = g.conv3d(x, vars[0], vars[1], self.conv.stride, self.conv.padding)?;
        let h = g.relu(h);
        let pooled = g.global_avg_pool(h)?;
        let row = g.reshape(pooled, &[1, self.conv.out_channels])?;
        let logits = g.matmul(row, vars[2])?;
        let logits = g.add_row_bias(logits, vars[3])?;
        g.reshape(logits, &[self.classes()])
    }

    pub fn logits(&self, v: &Volume4D) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.register(&mut g, false);
        let out = self.logits_in(&mut g, &vars, v.to_tensor())?;
        Ok(g.value(out).clone())
    }

    /// Weighted cross-entropy over a batch of volumes and its gradient per parameter tensor.
    pub fn loss_and_grad(&self, batch: &[&Volume4D], labels: &[usize], weights: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g = Graph::new();
        let vars = self.register(&mut g, true);
        let mut rows = Vec::with_capacity(batch.len());
        for v in batch {
            let z = self.logits_in(&mut g, &vars, v.to_tensor())?;
            rows.push(g.reshape(z, &[1, self.classes()])?);
        }
        let logits = g.concat_rows(&rows)?;
        let loss = g.weighted_cross_entropy(logits, labels, weights)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Ok((value, Vec::new()));
        }
        g.backward(loss)?;
        let grads = vars.iter().map(|&v| g.grad(v).expect("parameter leaf").to_vec()).collect();
        Ok((value, grads))
    }
}

/// Class probabilities for one preprocessed volume.
pub fn mri_classifier_forward(v: &Volume4D, model: &MriClassifier) -> Result<Tensor> {
    Ok(softmax(&model.logits(v)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkern::grad_check;

    fn tiny() -> (MriClassifier, Volume4D) {
        let arch = MriArch { out_channels: 4, ..MriArch::default() };
        let model = MriClassifier::init(&arch, 3).unwrap();
        let mut rng = seed::rng(9, &[]);
        let data = (0..4 * 512).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (model, Volume4D::new([8, 8, 8], data).unwrap())
    }

    #[test]
    fn probabilities_sum_to_one_and_uniform_with_zero_head() {
        let (mut model, v) = tiny();
        let p = mri_classifier_forward(&v, &model).unwrap();
        assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        model.head_weight.data_mut().iter_mut().for_each(|w| *w = 0.0);
        let p = mri_classifier_forward(&v, &model).unwrap();
        assert!(p.data().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (model, v) = tiny();
        let weights = [0.7, 1.1, 1.3];
        let params = model.param_vector();
        let err = grad_check(
            |p| {
                let mut m = model.clone();
                m.set_param_vector(p).unwrap();
                let (loss, grads) = m.loss_and_grad(&[&v], &[2], &weights).unwrap();
                (loss, grads.concat())
            },
            &params,
            1e-6,
        );
        assert!(err < 1e-4, "{err}");
    }
}
