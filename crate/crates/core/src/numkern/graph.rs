use alloc::vec;
use alloc::vec::Vec;

use super::conv::{self, ConvGeometry, Dims};
use super::tensor::{
    log_softmax_row, matmul_grad_lhs, matmul_grad_rhs, matmul_into, softmax_row, Tensor,
};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    Relu(Var),
    MulConst(Var, Vec<f64>),
    PoolConcat { input: Var, argmax: Vec<usize> },
    Reshape(Var),
    ConcatRows(Vec<Var>),
    Softmax(Var),
    WeightedCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        weights: Vec<f64>,
        probs: Vec<f64>,
    },
    Conv3d {
        input: Var,
        weight: Var,
        bias: Var,
        geometry: ConvGeometry,
    },
    GlobalAvgPool(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Define-by-run tape. Nodes are appended in topological order; `backward`
/// walks them once in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input; no gradient is ever computed for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        let mut value = value;
        value.set_requires_grad(false);
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf; its gradient is populated by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        let mut value = value;
        value.set_requires_grad(true);
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let err = || Error::dims("matmul", va.shape(), vb.shape());
        let (m, k) = va.rows_cols().ok_or_else(err)?;
        let (k2, p) = vb.rows_cols().ok_or_else(err)?;
        if k != k2 {
            return Err(err());
        }
        let mut out = vec![0.0; m * p];
        matmul_into(va.data(), vb.data(), &mut out, m, k, p);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::matrix(m, p, out)?, Op::MatMul(a, b), needs))
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix (or to a length-`n` vector).
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let n = *vx.shape().last().unwrap_or(&1);
        if vb.numel() != n || vb.shape().len() != 1 {
            return Err(Error::dims("add_row_bias", vx.shape(), vb.shape()));
        }
        let mut out = vx.data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        let t = Tensor::new(vx.shape().to_vec(), out)?;
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(t, Op::AddRowBias(x, bias), needs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = super::tensor::relu(self.value(x));
        let needs = self.needs(x);
        self.push(t, Op::Relu(x), needs)
    }

    /// Elementwise product with a constant buffer (used for dropout masks).
    pub fn mul_const(&mut self, x: Var, factors: Vec<f64>) -> Result<Var> {
        let vx = self.value(x);
        if factors.len() != vx.numel() {
            return Err(Error::dims("mul_const", vx.shape(), &[factors.len()]));
        }
        let data = vx.data().iter().zip(&factors).map(|(a, b)| a * b).collect();
        let t = Tensor::new(vx.shape().to_vec(), data)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::MulConst(x, factors), needs))
    }

    /// `[n×L] → [2L]`: per-column max followed by per-column mean.
    ///
    /// The max gradient is routed to the first row attaining the maximum.
    /// Column sums run over the values in sorted order, so both halves are
    /// bit-identical under any permutation of the rows.
    pub fn pool_concat(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        let (n, l) = vx.rows_cols().ok_or_else(|| {
            Error::Input(alloc::format!("pool_concat expects an n×L matrix, got {:?}", vx.shape()))
        })?;
        let data = vx.data();
        let mut out = vec![0.0; 2 * l];
        let mut argmax = vec![0usize; l];
        let mut column = Vec::with_capacity(n);
        for j in 0..l {
            let mut best = data[j];
            column.clear();
            for i in 0..n {
                let v = data[i * l + j];
                if v > best {
                    best = v;
                    argmax[j] = i;
                }
                column.push(v);
            }
            column.sort_unstable_by(f64::total_cmp);
            out[j] = best;
            out[l + j] = column.iter().fold(0.0, |a, &b| a + b) / n as f64;
        }
        let needs = self.needs(x);
        Ok(self.push(Tensor::vector(out)?, Op::PoolConcat { input: x, argmax }, needs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let mut t = t;
        t.set_requires_grad(false);
        let needs = self.needs(x);
        Ok(self.push(t, Op::Reshape(x), needs))
    }

    /// Stacks equal-width rows (vectors or `1×C` matrices) into a `B×C` matrix.
    pub fn concat_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Input("concat_rows needs at least one row".into()))?;
        let width = self.value(*first).numel();
        let mut data = Vec::with_capacity(width * rows.len());
        for &r in rows {
            let v = self.value(r);
            if v.numel() != width {
                return Err(Error::dims("concat_rows", &[width], v.shape()));
            }
            data.extend_from_slice(v.data());
        }
        let needs = rows.iter().any(|&r| self.needs(r));
        Ok(self.push(
            Tensor::matrix(rows.len(), width, data)?,
            Op::ConcatRows(rows.to_vec()),
            needs,
        ))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let t = super::tensor::softmax(self.value(x));
        let needs = self.needs(x);
        self.push(t, Op::Softmax(x), needs)
    }

    /// Mean over the batch of `w[y_b] · (−log softmax(logits_b)[y_b])`.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        weights: &[f64],
    ) -> Result<Var> {
        let vl = self.value(logits);
        let c = weights.len();
        let b = labels.len();
        if b == 0 || vl.numel() != b * c {
            return Err(Error::dims("weighted_cross_entropy", vl.shape(), &[b, c]));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Input("class weights must be positive".into()));
        }
        let mut probs = vec![0.0; b * c];
        let mut total = 0.0;
        for (bi, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::Input(alloc::format!(
                    "label {y} out of range for {c} classes"
                )));
            }
            let row = &vl.data()[bi * c..(bi + 1) * c];
            let logp = log_softmax_row(row);
            total += weights[y] * -logp[y];
            softmax_row(row, &mut probs[bi * c..(bi + 1) * c]);
        }
        let loss = total / b as f64;
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::WeightedCrossEntropy {
                logits,
                labels: labels.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
            needs,
        ))
    }

    /// Cubic-kernel 3-D convolution of a `[Cin, D, H, W]` input.
    pub fn conv3d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let (vx, vw, vb) = (self.value(input), self.value(weight), self.value(bias));
        let ws = vw.shape();
        if ws.len() != 5 || ws[2] != ws[3] || ws[3] != ws[4] {
            return Err(Error::dims("conv3d", vx.shape(), ws));
        }
        let geometry = ConvGeometry {
            in_channels: ws[1],
            out_channels: ws[0],
            kernel: ws[2],
            stride,
            padding,
        };
        if vb.numel() != geometry.out_channels {
            return Err(Error::dims("conv3d", ws, vb.shape()));
        }
        let dims = Dims::new(&geometry, vx.shape())?;
        let out = conv::forward(&geometry, &dims, vx.data(), vw.data(), vb.data());
        let t = Tensor::new(dims.out.to_vec(), out)?;
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            t,
            Op::Conv3d {
                input,
                weight,
                bias,
                geometry,
            },
            needs,
        ))
    }

    /// `[C, ...] → [C]`, mean over everything after the first axis.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        let c = vx.shape()[0];
        let per = vx.numel() / c;
        let out = vx
            .data()
            .chunks(per)
            .map(|ch| ch.iter().fold(0.0, |a, &b| a + b) / per as f64)
            .collect();
        let needs = self.needs(x);
        Ok(self.push(Tensor::vector(out)?, Op::GlobalAvgPool(x), needs))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().fold(0.0, |a, &b| a + b);
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), needs)
    }

    /// Reverse pass from a scalar node. Populates the gradient of every
    /// parameter leaf reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::dims("backward", self.value(loss).shape(), &[1]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            if matches!(self.nodes[idx].op, Op::Leaf) {
                self.nodes[idx].value.accumulate_grad(&g);
                continue;
            }
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (m, k) = va.rows_cols().expect("checked in forward");
                    let p = vb.shape()[1];
                    if self.nodes[a.0].needs_grad {
                        let da = slot(&mut grads, *a, m * k);
                        matmul_grad_lhs(&g, vb.data(), da, m, k, p);
                    }
                    if self.nodes[b.0].needs_grad {
                        let db = slot(&mut grads, *b, k * p);
                        matmul_grad_rhs(va.data(), &g, db, m, k, p);
                    }
                }
                Op::AddRowBias(x, bias) => {
                    let n = self.nodes[bias.0].value.numel();
                    if self.nodes[x.0].needs_grad {
                        add_into(slot(&mut grads, *x, g.len()), &g);
                    }
                    if self.nodes[bias.0].needs_grad {
                        let db = slot(&mut grads, *bias, n);
                        for row in g.chunks(n) {
                            add_into(db, row);
                        }
                    }
                }
                Op::Relu(x) => {
                    let vx = self.nodes[x.0].value.data();
                    let dx = slot(&mut grads, *x, vx.len());
                    for ((d, &gv), &xv) in dx.iter_mut().zip(&g).zip(vx) {
                        if xv > 0.0 {
                            *d += gv;
                        }
                    }
                }
                Op::MulConst(x, factors) => {
                    let dx = slot(&mut grads, *x, factors.len());
                    for ((d, &gv), &f) in dx.iter_mut().zip(&g).zip(factors) {
                        *d += gv * f;
                    }
                }
                Op::PoolConcat { input, argmax } => {
                    let (n, l) = self.nodes[input.0].value.rows_cols().expect("matrix");
                    let dx = slot(&mut grads, *input, n * l);
                    let inv_n = 1.0 / n as f64;
                    for i in 0..n {
                        for j in 0..l {
                            dx[i * l + j] += g[l + j] * inv_n;
                        }
                    }
                    for (j, &i) in argmax.iter().enumerate() {
                        dx[i * l + j] += g[j];
                    }
                }
                Op::Reshape(x) => {
                    add_into(slot(&mut grads, *x, g.len()), &g);
                }
                Op::ConcatRows(rows) => {
                    let width = g.len() / rows.len();
                    for (r, chunk) in rows.iter().zip(g.chunks(width)) {
                        if self.nodes[r.0].needs_grad {
                            add_into(slot(&mut grads, *r, width), chunk);
                        }
                    }
                }
                Op::Softmax(x) => {
                    let s = node.value.data();
                    let c = *node.value.shape().last().unwrap_or(&1);
                    let dx = slot(&mut grads, *x, s.len());
                    for ((srow, grow), drow) in s.chunks(c).zip(g.chunks(c)).zip(dx.chunks_mut(c)) {
                        let dot = srow.iter().zip(grow).fold(0.0, |a, (sv, gv)| a + sv * gv);
                        for ((d, &sv), &gv) in drow.iter_mut().zip(srow).zip(grow) {
                            *d += sv * (gv - dot);
                        }
                    }
                }
                Op::WeightedCrossEntropy {
                    logits,
                    labels,
                    weights,
                    probs,
                } => {
                    let c = weights.len();
                    let b = labels.len();
                    let scale = g[0] / b as f64;
                    let dx = slot(&mut grads, *logits, b * c);
                    for (bi, &y) in labels.iter().enumerate() {
                        let w = weights[y] * scale;
                        for j in 0..c {
                            let onehot = if j == y { 1.0 } else { 0.0 };
                            dx[bi * c + j] += w * (probs[bi * c + j] - onehot);
                        }
                    }
                }
                Op::Conv3d {
                    input,
                    weight,
                    bias,
                    geometry,
                } => {
                    let (input, weight, bias, geometry) = (*input, *weight, *bias, *geometry);
                    let vx = &self.nodes[input.0].value;
                    let vw = &self.nodes[weight.0].value;
                    let dims = Dims::new(&geometry, vx.shape())?;
                    let mut gx = self.nodes[input.0].needs_grad.then(|| vec![0.0; vx.numel()]);
                    let mut gw = self.nodes[weight.0].needs_grad.then(|| vec![0.0; vw.numel()]);
                    let mut gb = self.nodes[bias.0]
                        .needs_grad
                        .then(|| vec![0.0; geometry.out_channels]);
                    conv::backward(
                        &geometry,
                        &dims,
                        vx.data(),
                        vw.data(),
                        &g,
                        gx.as_deref_mut(),
                        gw.as_deref_mut(),
                        gb.as_deref_mut(),
                    );
                    for (v, buf) in [(input, gx), (weight, gw), (bias, gb)] {
                        if let Some(buf) = buf {
                            let n = buf.len();
                            add_into(slot(&mut grads, v, n), &buf);
                        }
                    }
                }
                Op::GlobalAvgPool(x) => {
                    let n = self.nodes[x.0].value.numel();
                    let per = n / g.len();
                    let dx = slot(&mut grads, *x, n);
                    for (chunk, &gv) in dx.chunks_mut(per).zip(&g) {
                        let share = gv / per as f64;
                        chunk.iter_mut().for_each(|d| *d += share);
                    }
                }
                Op::Sum(x) => {
                    let n = self.nodes[x.0].value.numel();
                    let dx = slot(&mut grads, *x, n);
                    dx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
        }
        Ok(())
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
