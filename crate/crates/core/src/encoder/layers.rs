//! Dense building blocks shared by the encoder layers.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::graph::Matrix;

/// Node-dimension normalization epsilon.
pub const NORM_EPS: f64 = 1e-5;

/// `y = x·W + b` with `W` of shape `in × out` and `b` a `1 × out` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub w: Matrix,
    pub b: Matrix,
}

impl Affine {
    /// Weights `N(0, 1/fan_in)`, zero bias.
    pub fn init(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Self {
        Affine { w: glorot_like(rng, fan_in, fan_out), b: Matrix::zeros(1, fan_out) }
    }

    pub fn zeros_like(&self) -> Self {
        Affine { w: Matrix::zeros(self.w.nrows(), self.w.ncols()), b: Matrix::zeros(1, self.b.ncols()) }
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x * &self.w;
        add_row(&mut y, &self.b);
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `∂/∂x`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, grad: &mut Affine) -> Matrix {
        grad.w += x.tr_mul(dy);
        grad.b += column_sums(dy);
        dy * self.w.transpose()
    }
}

pub fn glorot_like(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let normal = Normal::new(0.0, 1.0 / (fan_in.max(1) as f64).sqrt()).expect("finite std");
    Matrix::from_fn(fan_in, fan_out, |_, _| normal.sample(rng))
}

/// Per-feature scale and shift after normalizing over nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Norm {
    pub gamma: Matrix,
    pub beta: Matrix,
}

#[derive(Debug, Clone)]
pub struct NormCache {
    pub xhat: Matrix,
    pub inv_std: Vec<f64>,
}

impl Norm {
    pub fn new(width: usize) -> Self {
        Norm { gamma: Matrix::from_element(1, width, 1.0), beta: Matrix::zeros(1, width) }
    }

    pub fn zeros_like(&self) -> Self {
        Norm { gamma: Matrix::zeros(1, self.gamma.ncols()), beta: Matrix::zeros(1, self.beta.ncols()) }
    }

    /// Batch normalization where the batch is the node set of one graph.
    pub fn forward(&self, x: &Matrix) -> (Matrix, NormCache) {
        let n = x.nrows() as f64;
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.ncols());
        for mut col in xhat.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
            let var = col.norm_squared() / n;
            let s = 1.0 / (var + NORM_EPS).sqrt();
            col *= s;
            inv_std.push(s);
        }
        let mut y = xhat.clone();
        for (j, mut col) in y.column_iter_mut().enumerate() {
            col *= self.gamma[(0, j)];
            col.add_scalar_mut(self.beta[(0, j)]);
        }
        (y, NormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &NormCache, dy: &Matrix, grad: &mut Norm) -> Matrix {
        let n = dy.nrows() as f64;
        let mut dx = Matrix::zeros(dy.nrows(), dy.ncols());
        for j in 0..dy.ncols() {
            let dyj = dy.column(j);
            let xh = cache.xhat.column(j);
            grad.gamma[(0, j)] += dyj.dot(&xh);
            grad.beta[(0, j)] += dyj.sum();
            let g = self.gamma[(0, j)];
            let sum_d = dyj.sum() * g;
            let sum_dx = dyj.dot(&xh) * g;
            let s = cache.inv_std[j];
            for i in 0..dy.nrows() {
                dx[(i, j)] = s / n * (n * g * dyj[i] - sum_d - xh[i] * sum_dx);
            }
        }
        dx
    }
}

pub fn add_row(y: &mut Matrix, row: &Matrix) {
    for (j, mut col) in y.column_iter_mut().enumerate() {
        col.add_scalar_mut(row[(0, j)]);
    }
}

pub fn column_sums(m: &Matrix) -> Matrix {
    Matrix::from_iterator(1, m.ncols(), m.column_iter().map(|c| c.sum()))
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// `dy ⊙ 1[pre > 0]`.
pub fn relu_backward(pre: &Matrix, dy: &Matrix) -> Matrix {
    dy.zip_map(pre, |d, p| if p > 0.0 { d } else { 0.0 })
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

/// Pulls `∂/∂U` back through a row-wise softmax with output `u`.
pub fn softmax_rows_backward(u: &Matrix, du: &Matrix) -> Matrix {
    let mut d = Matrix::zeros(u.nrows(), u.ncols());
    for i in 0..u.nrows() {
        let dot: f64 = (0..u.ncols()).map(|c| u[(i, c)] * du[(i, c)]).sum();
        for c in 0..u.ncols() {
            d[(i, c)] = u[(i, c)] * (du[(i, c)] - dot);
        }
    }
    d
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}
