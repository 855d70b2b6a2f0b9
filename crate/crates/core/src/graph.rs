//! Sparse undirected graphs, SSBM generation and the modularity operator.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub type Matrix = DMatrix<f64>;

/// Immutable undirected simple graph in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    degree: Vec<usize>,
    a1_norm: f64,
}

impl Graph {
    /// Builds a graph from an undirected edge list.
    ///
    /// Pairs may be given in either orientation. Self-loops, duplicates and
    /// out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut list: Vec<(usize, usize)> = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidParameter(format!("self-loop at node {u}")));
            }
            list.push((u.min(v), u.max(v)));
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self::from_sorted_unique(n, list))
    }

    fn from_sorted_unique(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut degree = vec![0usize; n];
        for &(u, v) in &edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0usize; offsets[n]];
        for &(u, v) in &edges {
            neighbors[fill[u]] = v;
            fill[u] += 1;
            neighbors[fill[v]] = u;
            fill[v] += 1;
        }
        for u in 0..n {
            neighbors[offsets[u]..offsets[u + 1]].sort_unstable();
        }
        let a1_norm = 2.0 * edges.len() as f64;
        Graph {
            n,
            edges,
            offsets,
            neighbors,
            degree,
            a1_norm,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Sorted unique pairs `(u, v)` with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.degree[u]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degree
    }

    /// `‖A‖₁`, twice the edge count.
    pub fn a1_norm(&self) -> f64 {
        self.a1_norm
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn degree_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.n, self.degree.iter().map(|&d| d as f64))
    }

    /// Relabels nodes: node `u` of `self` becomes node `perm[u]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::dims(self.n, perm.len()));
        }
        Graph::from_edges(self.n, self.edges.iter().map(|&(u, v)| (perm[u], perm[v])))
    }

    /// `A·x` for a single vector.
    pub fn adj_apply_vec(&self, x: &[f64], out: &mut [f64]) {
        for u in 0..self.n {
            out[u] = self.neighbors(u).iter().map(|&v| x[v]).sum();
        }
    }

    /// `A·X` for an `N×C` matrix.
    pub fn adj_apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.nrows() != self.n {
            return Err(Error::dims(format!("{} rows", self.n), format!("{} rows", x.nrows())));
        }
        let mut out = Matrix::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            let col = x.column(c);
            for u in 0..self.n {
                out[(u, c)] = self.neighbors(u).iter().map(|&v| col[v]).sum();
            }
        }
        Ok(out)
    }

    /// Applies the modularity matrix `B = A − d·dᵀ/‖A‖₁` without forming it.
    pub fn modularity_matrix_apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = self.adj_apply(x)?;
        if self.a1_norm == 0.0 {
            return Ok(out);
        }
        let d = self.degree_vector();
        let dtx = x.tr_mul(&d);
        for c in 0..x.ncols() {
            let s = dtx[c] / self.a1_norm;
            for u in 0..self.n {
                out[(u, c)] -= d[u] * s;
            }
        }
        Ok(out)
    }
}

/// Community regime: assortative (dense blocks) or disassortative (dense
/// cross-block links).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Associative,
    Disassociative,
}

impl Mode {
    /// `+1` for associative, `−1` for disassociative.
    pub fn sign(self) -> f64 {
        match self {
            Mode::Associative => 1.0,
            Mode::Disassociative => -1.0,
        }
    }
}

/// Hard community assignment, one label per node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVector(pub Vec<usize>);

impl LabelVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// One more than the largest label, or 0 when empty.
    pub fn label_bound(&self) -> usize {
        self.0.iter().max().map_or(0, |m| m + 1)
    }

    pub fn distinct(&self) -> usize {
        let mut seen: Vec<usize> = self.0.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// `N×C` one-hot indicator matrix.
    pub fn one_hot(&self, c: usize) -> Result<Matrix> {
        if self.label_bound() > c {
            return Err(Error::InvalidParameter(format!(
                "label {} does not fit {c} columns",
                self.label_bound() - 1
            )));
        }
        let mut u = Matrix::zeros(self.len(), c);
        for (i, &l) in self.0.iter().enumerate() {
            u[(i, l)] = 1.0;
        }
        Ok(u)
    }

    pub fn permute(&self, perm: &[usize]) -> Self {
        let mut out = vec![0; self.len()];
        for (u, &l) in self.0.iter().enumerate() {
            out[perm[u]] = l;
        }
        LabelVector(out)
    }
}

impl std::ops::Deref for LabelVector {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

/// Parameters of the symmetric stochastic block model `SSBM(n, k, a/n, b/n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsbmParams {
    pub n: usize,
    pub k: usize,
    /// Within-community intensity, `p_in = a/n`.
    pub a: f64,
    /// Cross-community intensity, `p_out = b/n`.
    pub b: f64,
}

impl SsbmParams {
    pub fn new(n: usize, k: usize, a: f64, b: f64) -> Result<Self> {
        let p = SsbmParams { n, k, a, b };
        p.validate()?;
        Ok(p)
    }

    /// The associative benchmark setting, `SSBM(400, 5, 21/n, 2/n)`.
    pub fn associative() -> Self {
        SsbmParams { n: 400, k: 5, a: 21.0, b: 2.0 }
    }

    /// The disassociative benchmark setting, `SSBM(400, 5, 0, 18/n)`.
    pub fn disassociative() -> Self {
        SsbmParams { n: 400, k: 5, a: 0.0, b: 18.0 }
    }

    pub fn p_in(&self) -> f64 {
        self.a / self.n as f64
    }

    pub fn p_out(&self) -> f64 {
        self.b / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n < self.k {
            return Err(Error::InvalidParameter(format!(
                "need n >= k >= 1, got n={} k={}",
                self.n, self.k
            )));
        }
        for (name, p) in [("a/n", self.p_in()), ("b/n", self.p_out())] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Signal-to-noise ratio `(a−b)² / (k(a + (k−1)b))`.
    pub fn snr(&self) -> Result<f64> {
        let denom = self.k as f64 * (self.a + (self.k as f64 - 1.0) * self.b);
        if denom <= 0.0 {
            return Err(Error::InvalidParameter(
                "snr undefined when a + (k-1)b = 0".into(),
            ));
        }
        Ok((self.a - self.b).powi(2) / denom)
    }
}

/// Samples an SSBM graph and its planted labels.
///
/// Communities are exactly balanced: node `i` is assigned `i mod k` and the
/// assignment is then shuffled. Every unordered pair is an independent
/// Bernoulli draw. The stream is ChaCha8 seeded from `seed`.
pub fn ssbm_generate(params: &SsbmParams, seed: u64) -> Result<(Graph, LabelVector)> {
    params.validate()?;
    let SsbmParams { n, k, .. } = *params;
    let mut rng = seed::rng(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut rng);
    let (p_in, p_out) = (params.p_in(), params.p_out());
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Ok((Graph::from_sorted_unique(n, edges), LabelVector(labels)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn triangle() -> Graph {
        Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Graph::from_edges(3, [(0, 0)]).is_err());
        assert!(Graph::from_edges(3, [(0, 3)]).is_err());
        assert!(Graph::from_edges(3, [(0, 1), (1, 0)]).is_err());
    }

    #[test]
    fn adjacency_is_symmetric_and_degrees_match() {
        let (g, _) = ssbm_generate(&SsbmParams::new(60, 3, 10.0, 2.0).unwrap(), 9).unwrap();
        let mut total = 0;
        for u in 0..g.n() {
            assert_eq!(g.degree(u), g.neighbors(u).len());
            total += g.degree(u);
            for &v in g.neighbors(u) {
                assert_ne!(u, v);
                assert!(g.has_edge(v, u));
            }
        }
        assert_eq!(total as f64, g.a1_norm());
    }

    #[test]
    fn modularity_operator_on_triangle() {
        let g = triangle();
        let mut e0 = Matrix::zeros(3, 1);
        e0[(0, 0)] = 1.0;
        let out = g.modularity_matrix_apply(&e0).unwrap();
        assert_abs_diff_eq!(out[(0, 0)], -2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[(1, 0)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[(2, 0)], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn modularity_operator_kills_constants() {
        let (g, _) = ssbm_generate(&SsbmParams::associative(), 3).unwrap();
        let ones = Matrix::from_element(g.n(), 1, 1.0);
        let out = g.modularity_matrix_apply(&ones).unwrap();
        let dnorm = g.degree_vector().norm();
        assert!(out.amax() < 1e-10 * dnorm);
    }

    #[test]
    fn modularity_operator_dimension_mismatch() {
        assert!(triangle().modularity_matrix_apply(&Matrix::zeros(4, 1)).is_err());
    }

    #[test]
    fn zero_probability_gives_empty_graph() {
        let (g, labels) = ssbm_generate(&SsbmParams::new(10, 2, 0.0, 0.0).unwrap(), 1).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(labels.len(), 10);
    }

    #[test]
    fn unit_probability_single_block_is_complete() {
        let (g, labels) = ssbm_generate(&SsbmParams::new(6, 1, 6.0, 3.0).unwrap(), 5).unwrap();
        assert_eq!(g.edge_count(), 15);
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn rejects_out_of_range_probabilities() {
        assert!(SsbmParams::new(10, 2, 11.0, 0.0).is_err());
        assert!(SsbmParams::new(10, 2, 1.0, -1.0).is_err());
        assert!(SsbmParams::new(3, 4, 1.0, 1.0).is_err());
    }

    #[test]
    fn generation_is_deterministic_and_balanced() {
        let p = SsbmParams::associative();
        let (g1, l1) = ssbm_generate(&p, 77).unwrap();
        let (g2, l2) = ssbm_generate(&p, 77).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(l1, l2);
        let mut sizes = vec![0; p.k];
        for &l in l1.iter() {
            sizes[l] += 1;
        }
        assert_eq!(sizes, vec![80; 5]);
        let (g3, _) = ssbm_generate(&p, 78).unwrap();
        assert_ne!(g1, g3);
    }

    #[test]
    fn snr_values() {
        let assoc = SsbmParams::associative().snr().unwrap();
        assert_abs_diff_eq!(assoc, 361.0 / 145.0, epsilon = 1e-12);
        let dis = SsbmParams::disassociative().snr().unwrap();
        assert_abs_diff_eq!(dis, 0.9, epsilon = 1e-12);
        assert_eq!(SsbmParams::new(40, 4, 3.0, 3.0).unwrap().snr().unwrap(), 0.0);
        assert!(SsbmParams::new(40, 4, 0.0, 0.0).unwrap().snr().is_err());
    }
}
