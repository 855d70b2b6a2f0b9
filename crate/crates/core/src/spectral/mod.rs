//! Bethe Hessian spectral clustering.
//!
//! The Bethe Hessian `H(r) = (r² − 1)I − rA + D` is built around a scale
//! `r` derived from the spectral radius of the non-backtracking operator.
//! Its algebraically smallest eigenvectors carry the community signal; they
//! are clustered with k-means and also serve as the input embedding of the
//! neural encoder.

mod eigen;
mod kmeans;

pub use eigen::{
    dense_smallest, lanczos_smallest, smallest_eigenpairs, EigenPairs, SymmetricOperator,
    DENSE_LIMIT, RESIDUAL_TOL,
};
pub use kmeans::{kmeans, kmeans_with, KMeansConfig, KMeansResult};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelVector, Matrix, Mode};
use crate::seed;

/// How the Bethe Hessian scale is derived from the non-backtracking radius `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RMode {
    /// `|r| = √ρ`, the usual Bethe Hessian scale.
    #[default]
    Standard,
    /// `|r| = ρ`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    /// Signed scale used to build `H`.
    pub r: f64,
    /// Estimated non-backtracking spectral radius.
    pub rho: f64,
    /// Degree-moment estimate `Σd²/Σd − 1`.
    pub moment: f64,
    pub iterations: usize,
    /// False when power iteration stalled and `rho` is the moment estimate.
    pub converged: bool,
}

const NB_MAX_ITER: usize = 1000;
const NB_TOL: f64 = 1e-10;

/// Estimates the non-backtracking spectral radius by power iteration on the
/// `2N × 2N` companion operator `(x, y) → (A·x + (I − D)·y, x)`.
///
/// The growth is measured over two steps at a time so that a dominant pair
/// `±ρ` (bipartite graphs) still yields a stable estimate. If the iteration
/// has not settled after a fixed budget the degree-moment estimate is
/// returned instead, with `converged = false`.
pub fn non_backtracking_radius(g: &Graph) -> Result<(f64, f64, usize, bool)> {
    if g.edge_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let n = g.n();
    let degrees = g.degrees();
    let sum_d: f64 = degrees.iter().map(|&d| d as f64).sum();
    let sum_d2: f64 = degrees.iter().map(|&d| (d * d) as f64).sum();
    let moment = sum_d2 / sum_d - 1.0;

    let mut rng = seed::rng(seed::derive(0x6e62, seed::stream::NB_START));
    let mut x: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
    let mut y: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
    let mut ax = vec![0.0; n];

    let step = |x: &mut Vec<f64>, y: &mut Vec<f64>, ax: &mut Vec<f64>| {
        g.adj_apply_vec(x, ax);
        for u in 0..n {
            let nx = ax[u] + (1.0 - degrees[u] as f64) * y[u];
            y[u] = x[u];
            x[u] = nx;
        }
    };
    let norm = |x: &[f64], y: &[f64]| {
        (x.iter().map(|v| v * v).sum::<f64>() + y.iter().map(|v| v * v).sum::<f64>()).sqrt()
    };

    let mut prev = f64::NAN;
    for it in 1..=NB_MAX_ITER {
        let before = norm(&x, &y);
        x.iter_mut().chain(y.iter_mut()).for_each(|v| *v /= before);
        step(&mut x, &mut y, &mut ax);
        step(&mut x, &mut y, &mut ax);
        let after = norm(&x, &y);
        if after == 0.0 {
            // Nilpotent companion, e.g. a graph with no walks of length 3.
            return Ok((0.0, moment, it, true));
        }
        let rho = after.sqrt();
        if (rho - prev).abs() <= NB_TOL * rho {
            return Ok((rho, moment, it, true));
        }
        prev = rho;
    }
    Ok((moment, moment, NB_MAX_ITER, false))
}

/// Signed Bethe Hessian scale: `+` for associative, `−` for disassociative.
pub fn estimate_r(g: &Graph, mode: Mode, r_mode: RMode) -> Result<RadiusEstimate> {
    let (rho, moment, iterations, converged) = non_backtracking_radius(g)?;
    let magnitude = match r_mode {
        RMode::Standard => rho.max(0.0).sqrt(),
        RMode::Literal => rho,
    };
    Ok(RadiusEstimate { r: mode.sign() * magnitude, rho, moment, iterations, converged })
}

/// Matrix-free Bethe Hessian `H(r) = (r² − 1)I − rA + D`.
#[derive(Debug, Clone, Copy)]
pub struct BetheHessian<'g> {
    pub graph: &'g Graph,
    pub r: f64,
}

impl SymmetricOperator for BetheHessian<'_> {
    fn dim(&self) -> usize {
        self.graph.n()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let g = self.graph;
        let shift = self.r * self.r - 1.0;
        for u in 0..g.n() {
            let ax: f64 = g.neighbors(u).iter().map(|&v| x[v]).sum();
            out[u] = (shift + g.degree(u) as f64) * x[u] - self.r * ax;
        }
    }
}

pub fn bethe_hessian_apply(g: &Graph, r: f64, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != g.n() {
        return Err(Error::dims(g.n(), x.len()));
    }
    let mut out = vec![0.0; g.n()];
    BetheHessian { graph: g, r }.apply(x, &mut out);
    Ok(out)
}

/// The `k` smallest Bethe Hessian eigenpairs and the scale they were built at.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    /// `N × k`, unit-norm orthogonal columns.
    pub vectors: Matrix,
    /// Ascending.
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub radius: RadiusEstimate,
}

impl SpectralEmbedding {
    pub fn r(&self) -> f64 {
        self.radius.r
    }
}

pub fn bethe_hessian_embedding(g: &Graph, k: usize, mode: Mode, r_mode: RMode) -> Result<SpectralEmbedding> {
    if g.n() == 0 {
        return Err(Error::InvalidParameter("empty graph".into()));
    }
    let radius = estimate_r(g, mode, r_mode)?;
    let pairs = smallest_eigenpairs(&BetheHessian { graph: g, r: radius.r }, k)?;
    Ok(SpectralEmbedding {
        vectors: pairs.vectors,
        values: pairs.values,
        residuals: pairs.residuals,
        radius,
    })
}

/// Bethe Hessian baseline: embedding followed by k-means on its rows.
pub fn bethe_hessian_cluster(
    g: &Graph,
    k: usize,
    mode: Mode,
    r_mode: RMode,
    seed: u64,
) -> Result<(LabelVector, SpectralEmbedding)> {
    let emb = bethe_hessian_embedding(g, k, mode, r_mode)?;
    let km = kmeans(&emb.vectors, k, seed::derive(seed, seed::stream::KMEANS))?;
    Ok((km.labels, emb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cycle(n: usize) -> Graph {
        Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
    }

    #[test]
    fn cycle_radius_is_one() {
        for n in [5, 8, 13] {
            let est = estimate_r(&cycle(n), Mode::Associative, RMode::Standard).unwrap();
            assert_abs_diff_eq!(est.rho, 1.0, epsilon = 1e-6);
            assert_abs_diff_eq!(est.r, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn disassociative_sign_flips() {
        let g = cycle(7);
        let a = estimate_r(&g, Mode::Associative, RMode::Standard).unwrap();
        let d = estimate_r(&g, Mode::Disassociative, RMode::Standard).unwrap();
        assert_eq!(d.r, -a.r.abs());
    }

    #[test]
    fn complete_graph_radius() {
        // Non-backtracking radius of K_n is n − 2.
        let n = 6;
        let edges = (0..n).flat_map(|u| ((u + 1)..n).map(move |v| (u, v)));
        let g = Graph::from_edges(n, edges).unwrap();
        let est = estimate_r(&g, Mode::Associative, RMode::Literal).unwrap();
        assert!(est.converged);
        assert_abs_diff_eq!(est.rho, 4.0, epsilon = 1e-8);
        assert_abs_diff_eq!(est.r, 4.0, epsilon = 1e-8);
    }

    #[test]
    fn empty_graph_rejected() {
        let g = Graph::from_edges(4, []).unwrap();
        assert!(estimate_r(&g, Mode::Associative, RMode::Standard).is_err());
    }

    #[test]
    fn bethe_hessian_special_scales() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (1, 3)]).unwrap();
        let ones = vec![1.0; 4];
        let h1 = bethe_hessian_apply(&g, 1.0, &ones).unwrap();
        assert!(h1.iter().all(|v| v.abs() < 1e-15));
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let h0 = bethe_hessian_apply(&g, 0.0, &x).unwrap();
        for u in 0..4 {
            assert_abs_diff_eq!(h0[u], (g.degree(u) as f64 - 1.0) * x[u], epsilon = 1e-15);
        }
        assert!(bethe_hessian_apply(&g, 1.0, &[1.0]).is_err());
    }

    #[test]
    fn path_laplacian_spectrum() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let pairs = smallest_eigenpairs(&BetheHessian { graph: &g, r: 1.0 }, 3).unwrap();
        for (got, want) in pairs.values.iter().zip([0.0, 1.0, 3.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-10);
        }
        let v0 = pairs.vectors.column(0);
        assert_abs_diff_eq!(v0[0], v0[1], epsilon = 1e-10);
        assert_abs_diff_eq!(v0[1], v0[2], epsilon = 1e-10);
    }
}
