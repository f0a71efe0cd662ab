use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numkern::{softmax, Graph, Tensor, Var};
use crate::seed;

/// A parameterized map from one tile (flattened) to a latent vector of width `L`.
pub trait Embedder: Clone {
    fn input_len(&self) -> usize;
    fn latent(&self) -> usize;
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
    /// Maps `[n, input_len]` tiles to `[n, latent]`, one row per tile.
    fn forward(&self, graph: &mut Graph, params: &[Var], tiles: Var) -> Result<Var>;
}

pub(crate) fn glorot(rows: usize, cols: usize, rng: &mut seed::Rng) -> Result<Tensor> {
    let bound = libm::sqrt(6.0 / (rows + cols) as f64);
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::matrix(rows, cols, data)
}

/// Reference embedder: `linear(d_in→H) → relu → linear(H→L)` on flattened pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpEmbedder {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl MlpEmbedder {
    pub fn init(input_len: usize, hidden: usize, latent: usize, rng: &mut seed::Rng) -> Result<Self> {
        Ok(MlpEmbedder {
            w1: glorot(input_len, hidden, rng)?,
            b1: Tensor::zeros(&[hidden])?,
            w2: glorot(hidden, latent, rng)?,
            b2: Tensor::zeros(&[latent])?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.w1.shape()[1]
    }
}

impl Embedder for MlpEmbedder {
    fn input_len(&self) -> usize {
        self.w1.shape()[0]
    }

    fn latent(&self) -> usize {
        self.w2.shape()[1]
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn forward(&self, g: &mut Graph, p: &[Var], tiles: Var) -> Result<Var> {
        let h = g.matmul(tiles, p[0])?;
        let h = g.add_row_bias(h, p[1])?;
        let h = g.relu(h);
        let z = g.matmul(h, p[2])?;
        g.add_row_bias(z, p[3])
    }
}

/// Architecture of the reference model; also the checkpoint descriptor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilArch {
    pub input_len: usize,
    pub hidden: usize,
    pub latent: usize,
    pub classes: usize,
    pub dropout: f64,
}

impl MilArch {
    pub fn param_count(&self) -> usize {
        let (d, h, l, c) = (self.input_len, self.hidden, self.latent, self.classes);
        d * h + h + h * l + l + 2 * l * c + c
    }

    /// Recovers the embedder input width from a flat parameter count.
    pub fn input_len_from_params(hidden: usize, latent: usize, classes: usize, count: usize) -> Option<usize> {
        let fixed = hidden + hidden * latent + latent + 2 * latent * classes + classes;
        if hidden == 0 || count <= fixed || (count - fixed) % hidden != 0 {
            return None;
        }
        Some((count - fixed) / hidden)
    }
}

/// Embedder + `linear(2L → C)` head with dropout in front of it.
#[derive(Debug, Clone, PartialEq)]
pub struct MilModel<E = MlpEmbedder> {
    pub embedder: E,
    pub head_weight: Tensor,
    pub head_bias: Tensor,
    pub dropout: f64,
}

impl MilModel<MlpEmbedder> {
    /// Seed-derived Glorot-uniform initialization, zero biases.
    pub fn init(arch: &MilArch, seed_value: u64) -> Result<Self> {
        let mut rng = seed::rng(seed_value, &[seed::tag::INIT]);
        let embedder = MlpEmbedder::init(arch.input_len, arch.hidden, arch.latent, &mut rng)?;
        MilModel::with_embedder(embedder, arch.classes, arch.dropout, &mut rng)
    }

    pub fn arch(&self) -> MilArch {
        MilArch {
            input_len: self.embedder.input_len(),
            hidden: self.embedder.hidden(),
            latent: self.latent(),
            classes: self.classes(),
            dropout: self.dropout,
        }
    }
}

impl<E: Embedder> MilModel<E> {
    pub fn with_embedder(embedder: E, classes: usize, dropout: f64, rng: &mut seed::Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout rate {dropout} outside [0, 1)")));
        }
        let l2 = 2 * embedder.latent();
        Ok(MilModel {
            head_weight: glorot(l2, classes, rng)?,
            head_bias: Tensor::zeros(&[classes])?,
            embedder,
            dropout,
        })
    }

    pub fn latent(&self) -> usize {
        self.embedder.latent()
    }

    pub fn classes(&self) -> usize {
        self.head_bias.numel()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.embedder.params();
        p.push(&self.head_weight);
        p.push(&self.head_bias);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.embedder.params_mut();
        p.push(&mut self.head_weight);
        p.push(&mut self.head_bias);
        p
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
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect()
    }

    fn head_vars<'a>(&self, vars: &'a [Var]) -> (&'a [Var], Var, Var) {
        let n = vars.len();
        (&vars[..n - 2], vars[n - 2], vars[n - 1])
    }

    /// `[n, ...]` tiles → `[n, L]` latent matrix inside `g`.
    pub fn embed_in(&self, g: &mut Graph, vars: &[Var], tiles: Tensor) -> Result<Var> {
        let n = tiles.shape()[0];
        let per = tiles.numel() / n;
        if per != self.embedder.input_len() {
            return Err(Error::Input(format!(
                "tile tensors have {per} values, embedder expects {}",
                self.embedder.input_len()
            )));
        }
        let x = g.constant(tiles.reshape(&[n, per])?);
        let (emb, _, _) = self.head_vars(vars);
        self.embedder.forward(g, emb, x)
    }

    /// Slide logits `[C]` for one bag; `mask` is the dropout multiplier over the pooled `2L` vector.
    pub fn bag_logits_in(&self, g: &mut Graph, vars: &[Var], tiles: Tensor, mask: Option<Vec<f64>>) -> Result<Var> {
        let z = self.embed_in(g, vars, tiles)?;
        let mut pooled = g.pool_concat(z)?;
        if let Some(m) = mask {
            pooled = g.mul_const(pooled, m)?;
        }
        let (_, w, b) = self.head_vars(vars);
        let row = g.reshape(pooled, &[1, 2 * self.latent()])?;
        let logits = g.matmul(row, w)?;
        let logits = g.add_row_bias(logits, b)?;
        g.reshape(logits, &[self.classes()])
    }

    /// `[n, L]` latent matrix, rows in bag order.
    pub fn embed_bag(&self, tiles: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.register(&mut g, false);
        let z = self.embed_in(&mut g, &vars, tiles.clone())?;
        Ok(g.value(z).clone())
    }

    /// Eval-mode logits for a bag of tiles.
    pub fn slide_logits(&self, tiles: Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.register(&mut g, false);
        let out = self.bag_logits_in(&mut g, &vars, tiles, None)?;
        Ok(g.value(out).clone())
    }

    pub fn slide_probs(&self, tiles: Tensor) -> Result<Vec<f64>> {
        Ok(softmax(&self.slide_logits(tiles)?).into_data())
    }

    /// Weighted cross-entropy over slide logits of several bags, with its
    /// gradient for every parameter tensor (in [`MilModel::params`] order).
    pub fn loss_and_grad(
        &self,
        bags: Vec<Tensor>,
        labels: &[usize],
        weights: &[f64],
        masks: Vec<Option<Vec<f64>>>,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g = Graph::new();
        let vars = self.register(&mut g, true);
        let mut rows = Vec::with_capacity(bags.len());
        for (tiles, mask) in bags.into_iter().zip(masks) {
            rows.push(self.bag_logits_in(&mut g, &vars, tiles, mask)?);
        }
        let logits = g.concat_rows(&rows)?;
        let loss = g.weighted_cross_entropy(logits, labels, weights)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Ok((value, Vec::new()));
        }
        g.backward(loss)?;
        let grads = vars
            .iter()
            .map(|&v| g.grad(v).expect("parameter leaf").to_vec())
            .collect();
        Ok((value, grads))
    }
}

/// Per-column max over rows followed by per-column mean: `[n, L] → [2L]`.
pub fn pool_concat(latent: &Tensor) -> Result<Tensor> {
    if latent.shape().len() != 2 {
        return Err(Error::Input(format!(
            "pooling expects an n×L matrix with n ≥ 1, got {:?}",
            latent.shape()
        )));
    }
    let mut g = Graph::new();
    let x = g.constant(latent.clone());
    let p = g.pool_concat(x)?;
    Ok(g.value(p).clone())
}

/// Inverted dropout multipliers: 0 with probability `p`, else `1/(1−p)`.
pub fn dropout_mask<R: Rng + ?Sized>(rng: &mut R, width: usize, p: f64) -> Vec<f64> {
    let keep = 1.0 - p;
    (0..width)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

/// Head on a pooled `2L` vector. Train mode applies dropout; eval mode is deterministic.
pub fn head_forward<E: Embedder, R: Rng + ?Sized>(
    model: &MilModel<E>,
    pooled: &Tensor,
    rng: &mut R,
    train: bool,
) -> Result<Tensor> {
    let width = 2 * model.latent();
    if pooled.numel() != width {
        return Err(Error::dims("head", &[width], pooled.shape()));
    }
    let mut x = pooled.data().to_vec();
    if train && model.dropout > 0.0 {
        let mask = dropout_mask(rng, width, model.dropout);
        for (v, m) in x.iter_mut().zip(mask) {
            *v *= m;
        }
    }
    let c = model.classes();
    let w = model.head_weight.data();
    let mut out = model.head_bias.data().to_vec();
    for (j, &xv) in x.iter().enumerate() {
        for k in 0..c {
            out[k] += xv * w[j * c + k];
        }
    }
    Tensor::vector(out)
}
