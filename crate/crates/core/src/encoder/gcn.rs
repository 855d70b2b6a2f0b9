//! Graph convolution layer `X' = relu(Â·X·W + b) + X`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{relu, relu_backward, Affine};
use crate::graph::{Graph, Matrix};

/// Symmetrically normalized adjacency with self-loops,
/// `Â = D̃^{−1/2} (A + I) D̃^{−1/2}` with `D̃ = D + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn new(g: &Graph) -> Self {
        let inv_sqrt: Vec<f64> = (0..g.n()).map(|u| 1.0 / ((g.degree(u) + 1) as f64).sqrt()).collect();
        let mut offsets = vec![0];
        let mut targets = Vec::with_capacity(g.n() + 2 * g.edge_count());
        let mut weights = Vec::with_capacity(targets.capacity());
        for u in 0..g.n() {
            targets.push(u);
            weights.push(inv_sqrt[u] * inv_sqrt[u]);
            for &v in g.neighbors(u) {
                targets.push(v);
                weights.push(inv_sqrt[u] * inv_sqrt[v]);
            }
            offsets.push(targets.len());
        }
        NormalizedAdjacency { offsets, targets, weights }
    }

    /// `Â·X`. `Â` is symmetric, so this also serves the backward pass.
    pub fn apply(&self, x: &Matrix) -> Matrix {
        let n = self.offsets.len() - 1;
        let mut out = Matrix::zeros(n, x.ncols());
        for c in 0..x.ncols() {
            let col = x.column(c);
            for u in 0..n {
                let range = self.offsets[u]..self.offsets[u + 1];
                out[(u, c)] = self.targets[range.clone()]
                    .iter()
                    .zip(&self.weights[range])
                    .map(|(&t, &w)| w * col[t])
                    .sum();
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.offsets.len() - 1)
            .map(|u| self.weights[self.offsets[u]..self.offsets[u + 1]].iter().sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    pub lin: Affine,
}

impl GcnParams {
    pub fn init(rng: &mut impl Rng, hidden: usize) -> Self {
        GcnParams { lin: Affine::init(rng, hidden, hidden) }
    }

    pub fn zeros_like(&self) -> Self {
        GcnParams { lin: self.lin.zeros_like() }
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("w", &self.lin.w), ("b", &self.lin.b)]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.lin.w, &mut self.lin.b]
    }
}

#[derive(Debug, Clone)]
pub struct GcnCache {
    pub adjacency: NormalizedAdjacency,
    pub propagated: Matrix,
    pub pre: Matrix,
}

pub fn gcn_layer_forward(g: &Graph, x: &Matrix, p: &GcnParams) -> (Matrix, GcnCache) {
    gcn_forward_with(NormalizedAdjacency::new(g), x, p)
}

pub(crate) fn gcn_forward_with(adjacency: NormalizedAdjacency, x: &Matrix, p: &GcnParams) -> (Matrix, GcnCache) {
    let propagated = adjacency.apply(x);
    let pre = p.lin.forward(&propagated);
    let mut out = relu(&pre);
    if out.shape() == x.shape() {
        out += x;
    }
    (out, GcnCache { adjacency, propagated, pre })
}

pub fn gcn_layer_backward(cache: &GcnCache, p: &GcnParams, dy: &Matrix) -> (GcnParams, Matrix) {
    let mut grad = p.zeros_like();
    let dpre = relu_backward(&cache.pre, dy);
    let dprop = p.lin.backward(&cache.propagated, &dpre, &mut grad.lin);
    let mut dx = cache.adjacency.apply(&dprop);
    if dx.shape() == dy.shape() {
        dx += dy;
    }
    (grad, dx)
}
