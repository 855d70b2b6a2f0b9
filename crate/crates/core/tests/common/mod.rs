#![allow(dead_code)]

use commdet::{Graph, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph with edge probability `p`.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if r.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

/// Random graph guaranteed to have at least one edge.
pub fn random_nonempty_graph(n: usize, p: f64, seed: u64) -> Graph {
    let g = random_graph(n, p, seed);
    if g.edge_count() > 0 {
        return g;
    }
    Graph::from_edges(n, [(0, 1)]).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    Matrix::from_fn(rows, cols, |_, _| r.random::<f64>() * 2.0 - 1.0)
}

pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng(seed));
    p
}

/// Row-stochastic random matrix.
pub fn random_stochastic(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut m = random_matrix(rows, cols, seed).map(|x| x.abs() + 0.05);
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

/// Rows of `m` moved so that row `u` lands at `perm[u]`.
pub fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for u in 0..m.nrows() {
        out.set_row(perm[u], &m.row(u));
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn rel_error(a: &Matrix, b: &Matrix, floor: f64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(floor)
}

/// Central finite differences of `f` with respect to every entry of `x`.
pub fn fd_gradient(x: &Matrix, h: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut grad = Matrix::zeros(x.nrows(), x.ncols());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

pub fn two_cliques(size: usize) -> (Graph, Vec<usize>) {
    let mut edges = Vec::new();
    for block in 0..2 {
        let base = block * size;
        for u in 0..size {
            for v in (u + 1)..size {
                edges.push((base + u, base + v));
            }
        }
    }
    let labels = (0..2 * size).map(|i| i / size).collect();
    (Graph::from_edges(2 * size, edges).unwrap(), labels)
}
