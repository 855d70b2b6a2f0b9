//! Masked multi-head attention over graph neighborhoods.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{glorot_like, relu, relu_backward, Affine, Norm, NormCache};
use crate::graph::{Graph, Matrix};

/// Per-node attention sets: each node itself first, then its neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    pub offsets: Vec<usize>,
    pub targets: Vec<usize>,
}

impl NeighborIndex {
    pub fn new(g: &Graph) -> Self {
        let mut offsets = Vec::with_capacity(g.n() + 1);
        let mut targets = Vec::with_capacity(g.n() + 2 * g.edge_count());
        offsets.push(0);
        for u in 0..g.n() {
            targets.push(u);
            targets.extend_from_slice(g.neighbors(u));
            offsets.push(targets.len());
        }
        NeighborIndex { offsets, targets }
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn range(&self, u: usize) -> std::ops::Range<usize> {
        self.offsets[u]..self.offsets[u + 1]
    }
}

/// One encoder layer: attention sublayer and feed-forward sublayer, each
/// with a residual connection and node normalization.
///
/// Head `h` uses columns `h·d_h .. (h+1)·d_h` of the query, key and value
/// projections, where `d_h = hidden / heads`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub heads: usize,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub norm1: Norm,
    pub ff1: Affine,
    pub ff2: Affine,
    pub norm2: Norm,
}

impl AttentionParams {
    pub fn init(rng: &mut impl Rng, hidden: usize, heads: usize) -> Self {
        AttentionParams {
            heads,
            wq: glorot_like(rng, hidden, hidden),
            wk: glorot_like(rng, hidden, hidden),
            wv: glorot_like(rng, hidden, hidden),
            wo: glorot_like(rng, hidden, hidden),
            norm1: Norm::new(hidden),
            ff1: Affine::init(rng, hidden, hidden),
            ff2: Affine::init(rng, hidden, hidden),
            norm2: Norm::new(hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.wq.nrows()
    }

    pub fn head_dim(&self) -> usize {
        self.hidden() / self.heads
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.nrows(), m.ncols());
        AttentionParams {
            heads: self.heads,
            wq: z(&self.wq),
            wk: z(&self.wk),
            wv: z(&self.wv),
            wo: z(&self.wo),
            norm1: self.norm1.zeros_like(),
            ff1: self.ff1.zeros_like(),
            ff2: self.ff2.zeros_like(),
            norm2: self.norm2.zeros_like(),
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("wo", &self.wo),
            ("norm1.gamma", &self.norm1.gamma),
            ("norm1.beta", &self.norm1.beta),
            ("ff1.w", &self.ff1.w),
            ("ff1.b", &self.ff1.b),
            ("ff2.w", &self.ff2.w),
            ("ff2.b", &self.ff2.b),
            ("norm2.gamma", &self.norm2.gamma),
            ("norm2.beta", &self.norm2.beta),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.norm1.gamma,
            &mut self.norm1.beta,
            &mut self.ff1.w,
            &mut self.ff1.b,
            &mut self.ff2.w,
            &mut self.ff2.b,
            &mut self.norm2.gamma,
            &mut self.norm2.beta,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub index: NeighborIndex,
    pub x: Matrix,
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    /// `alpha[h][e]`: weight of entry `e` of the neighbor index in head `h`.
    pub alpha: Vec<Vec<f64>>,
    pub attended: Matrix,
    pub norm1: NormCache,
    pub y1: Matrix,
    pub ff_pre: Matrix,
    pub ff_hidden: Matrix,
    pub norm2: NormCache,
}

pub fn attention_layer_forward(g: &Graph, x: &Matrix, p: &AttentionParams) -> (Matrix, AttentionCache) {
    let index = NeighborIndex::new(g);
    attention_forward_indexed(index, x, p)
}

pub(crate) fn attention_forward_indexed(
    index: NeighborIndex,
    x: &Matrix,
    p: &AttentionParams,
) -> (Matrix, AttentionCache) {
    let n = x.nrows();
    let dh = p.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let q = x * &p.wq;
    let k = x * &p.wk;
    let v = x * &p.wv;

    let mut alpha = vec![vec![0.0; index.targets.len()]; p.heads];
    let mut attended = Matrix::zeros(n, p.hidden());
    let mut scores: Vec<f64> = Vec::new();
    for (h, alpha_h) in alpha.iter_mut().enumerate() {
        let cols = h * dh..(h + 1) * dh;
        for u in 0..n {
            let range = index.range(u);
            scores.clear();
            for &t in &index.targets[range.clone()] {
                let s: f64 = cols.clone().map(|c| q[(u, c)] * k[(t, c)]).sum();
                scores.push(s * scale);
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                total += *s;
            }
            for (e, s) in range.clone().zip(&scores) {
                let a = s / total;
                alpha_h[e] = a;
                let t = index.targets[e];
                for c in cols.clone() {
                    attended[(u, c)] += a * v[(t, c)];
                }
            }
        }
    }

    let r1 = x + &attended * &p.wo;
    let (y1, norm1) = p.norm1.forward(&r1);
    let ff_pre = p.ff1.forward(&y1);
    let ff_hidden = relu(&ff_pre);
    let r2 = &y1 + p.ff2.forward(&ff_hidden);
    let (y2, norm2) = p.norm2.forward(&r2);
    let cache = AttentionCache {
        index,
        x: x.clone(),
        q,
        k,
        v,
        alpha,
        attended,
        norm1,
        y1,
        ff_pre,
        ff_hidden,
        norm2,
    };
    (y2, cache)
}

/// Returns parameter gradients and `∂/∂x`.
pub fn attention_layer_backward(
    cache: &AttentionCache,
    p: &AttentionParams,
    dy: &Matrix,
) -> (AttentionParams, Matrix) {
    let mut grad = p.zeros_like();
    let n = dy.nrows();
    let dh = p.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let dr2 = p.norm2.backward(&cache.norm2, dy, &mut grad.norm2);
    let dhidden = p.ff2.backward(&cache.ff_hidden, &dr2, &mut grad.ff2);
    let dpre = relu_backward(&cache.ff_pre, &dhidden);
    let dy1 = dr2 + p.ff1.backward(&cache.y1, &dpre, &mut grad.ff1);
    let dr1 = p.norm1.backward(&cache.norm1, &dy1, &mut grad.norm1);

    grad.wo = cache.attended.tr_mul(&dr1);
    let dattended = &dr1 * p.wo.transpose();

    let index = &cache.index;
    let (q, k, v) = (&cache.q, &cache.k, &cache.v);
    let mut dq = Matrix::zeros(n, p.hidden());
    let mut dk = Matrix::zeros(n, p.hidden());
    let mut dv = Matrix::zeros(n, p.hidden());
    let mut dalpha: Vec<f64> = Vec::new();
    for (h, alpha_h) in cache.alpha.iter().enumerate() {
        let cols = h * dh..(h + 1) * dh;
        for u in 0..n {
            let range = index.range(u);
            dalpha.clear();
            for e in range.clone() {
                let t = index.targets[e];
                let mut da = 0.0;
                for c in cols.clone() {
                    da += dattended[(u, c)] * v[(t, c)];
                    dv[(t, c)] += alpha_h[e] * dattended[(u, c)];
                }
                dalpha.push(da);
            }
            let mean: f64 = range.clone().zip(&dalpha).map(|(e, da)| alpha_h[e] * da).sum();
            for (e, da) in range.zip(&dalpha) {
                let ds = alpha_h[e] * (da - mean) * scale;
                if ds == 0.0 {
                    continue;
                }
                let t = index.targets[e];
                for c in cols.clone() {
                    dq[(u, c)] += ds * k[(t, c)];
                    dk[(t, c)] += ds * q[(u, c)];
                }
            }
        }
    }
    grad.wq = cache.x.tr_mul(&dq);
    grad.wk = cache.x.tr_mul(&dk);
    grad.wv = cache.x.tr_mul(&dv);
    let dx = dr1 + dq * p.wq.transpose() + dk * p.wk.transpose() + dv * p.wv.transpose();
    (grad, dx)
}
