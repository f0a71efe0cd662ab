use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major dense tensor of 64-bit floats.
///
/// `grad` is present iff `requires_grad` is set and always has the same
/// length as `data`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Input(alloc::format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dims("tensor", &shape, &[data.len()]));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let numel = shape.iter().product();
        Tensor::new(shape.to_vec(), vec![value; numel])
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Tensor::full(shape, 0.0)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    /// Shorthand for a 1-D tensor.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![data.len()], data)
    }

    /// Shorthand for a 2-D tensor.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() || shape.contains(&0) {
            return Err(Error::dims("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
        self.grad = if flag {
            Some(vec![0.0; self.data.len()])
        } else {
            None
        };
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub(crate) fn accumulate_grad(&mut self, g: &[f64]) {
        if let Some(buf) = self.grad.as_mut() {
            for (b, &x) in buf.iter_mut().zip(g) {
                *b += x;
            }
        }
    }

    pub(crate) fn rows_cols(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Some((*r, *c)),
            _ => None,
        }
    }
}

const K_BLOCK: usize = 256;

/// `c[i][j] += Σ_t a[i][t]·b[t][j]`, summing over `t` in ascending order.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, p: usize) {
    let mut t0 = 0;
    while t0 < k {
        let t1 = (t0 + K_BLOCK).min(k);
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            let c_row = &mut c[i * p..(i + 1) * p];
            for t in t0..t1 {
                let av = a_row[t];
                let b_row = &b[t * p..(t + 1) * p];
                for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                    *cv += av * bv;
                }
            }
        }
        t0 = t1;
    }
}

/// `db[t][j] += Σ_i a[i][t]·g[i][j]` (gradient of the right operand), summing over `i` ascending.
pub(crate) fn matmul_grad_rhs(a: &[f64], g: &[f64], db: &mut [f64], m: usize, k: usize, p: usize) {
    let mut t0 = 0;
    while t0 < k {
        let t1 = (t0 + K_BLOCK).min(k);
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            let g_row = &g[i * p..(i + 1) * p];
            for t in t0..t1 {
                let av = a_row[t];
                let db_row = &mut db[t * p..(t + 1) * p];
                for (d, &gv) in db_row.iter_mut().zip(g_row) {
                    *d += av * gv;
                }
            }
        }
        t0 = t1;
    }
}

/// `da[i][t] += Σ_j g[i][j]·b[t][j]` (gradient of the left operand).
pub(crate) fn matmul_grad_lhs(g: &[f64], b: &[f64], da: &mut [f64], m: usize, k: usize, p: usize) {
    for i in 0..m {
        let g_row = &g[i * p..(i + 1) * p];
        for t in 0..k {
            let b_row = &b[t * p..(t + 1) * p];
            let mut acc = 0.0;
            for (&gv, &bv) in g_row.iter().zip(b_row) {
                acc += gv * bv;
            }
            da[i * k + t] += acc;
        }
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.rows_cols().ok_or_else(|| Error::dims("matmul", a.shape(), b.shape()))?;
    let (k2, p) = b.rows_cols().ok_or_else(|| Error::dims("matmul", a.shape(), b.shape()))?;
    if k != k2 {
        return Err(Error::dims("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![0.0; m * p];
    matmul_into(a.data(), b.data(), &mut out, m, k, p);
    Tensor::matrix(m, p, out)
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

pub(crate) fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = libm::exp(v - max);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Numerically stable `log softmax(row)`.
pub fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &v in row {
        sum += libm::exp(v - max);
    }
    let lse = max + libm::log(sum);
    row.iter().map(|&v| v - lse).collect()
}

/// Softmax over the last axis.
pub fn softmax(x: &Tensor) -> Tensor {
    let c = *x.shape().last().unwrap_or(&1);
    let mut out = vec![0.0; x.numel()];
    for (row, o) in x.data().chunks(c).zip(out.chunks_mut(c)) {
        softmax_row(row, o);
    }
    Tensor::new(x.shape().to_vec(), out).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_examples() {
        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matmul(&eye, &m).unwrap().data(), m.data());

        let row = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let col = Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap();
        assert_eq!(matmul(&row, &col).unwrap().data(), &[11.0]);

        let z = Tensor::zeros(&[3, 4]).unwrap();
        let any = Tensor::matrix(4, 2, (0..8).map(|v| v as f64 - 3.5).collect()).unwrap();
        let out = matmul(&z, &any).unwrap();
        assert_eq!(out.shape(), &[3, 2]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]).unwrap();
        let b = Tensor::zeros(&[2, 3]).unwrap();
        match matmul(&a, &b) {
            Err(Error::Dimension { left, right, .. }) => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn relu_examples() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::vector(vec![-3.0, -0.5]).unwrap();
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&Tensor::vector(vec![0.0; 3]).unwrap());
        for &p in u.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let big = softmax(&Tensor::vector(vec![1000.0, 0.0, 0.0]).unwrap());
        assert!((big.data()[0] - 1.0).abs() < 1e-12);
        assert!(big.data().iter().all(|v| v.is_finite()));

        let ln2 = core::f64::consts::LN_2;
        let s = softmax(&Tensor::vector(vec![ln2, 0.0, 0.0]).unwrap());
        let want = [0.5, 0.25, 0.25];
        for (a, b) in s.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_extent_rejected() {
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![1.0]).is_err());
    }
}
