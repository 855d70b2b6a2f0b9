//! Smallest eigenpairs of symmetric matrix-free operators.
//!
//! Small problems are materialized column by column and handed to a dense
//! symmetric eigensolver. Larger ones go through Lanczos with full
//! reorthogonalization. Both routes check the same residual bound before
//! returning.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::Matrix;
use crate::seed;

/// Dimension up to which the dense route is used.
pub const DENSE_LIMIT: usize = 2000;

/// Residual bound `‖Av − λv‖ ≤ RESIDUAL_TOL · max(1, |λ|)`.
pub const RESIDUAL_TOL: f64 = 1e-8;

const START_SEED: u64 = 0x5eed_1a2c;

/// Symmetric linear operator known only through its action.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Ascending.
    pub values: Vec<f64>,
    /// Unit-norm eigenvectors, one per column.
    pub vectors: Matrix,
    /// `‖Av − λv‖₂` per pair.
    pub residuals: Vec<f64>,
}

/// The `k` algebraically smallest eigenpairs of `op`.
pub fn smallest_eigenpairs(op: &impl SymmetricOperator, k: usize) -> Result<EigenPairs> {
    let n = op.dim();
    if k > n {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds dimension {n}")));
    }
    if n <= DENSE_LIMIT {
        dense_smallest(op, k)
    } else {
        lanczos_smallest(op, k)
    }
}

/// Dense route: materialize, symmetrize, diagonalize.
pub fn dense_smallest(op: &impl SymmetricOperator, k: usize) -> Result<EigenPairs> {
    let n = op.dim();
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        m.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(n, k);
    for (c, &i) in order[..k].iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    finish(op, values, vectors, n)
}

/// Lanczos with full reorthogonalization.
///
/// On breakdown (an invariant subspace has been exhausted) the iteration
/// continues from a fresh random vector orthogonal to the basis. A single
/// Krylov sequence sees each distinct eigenvalue once, so after convergence
/// a deflated run on the orthogonal complement of the accepted vectors looks
/// for missed copies of repeated eigenvalues; this repeats until it finds
/// nothing below the current `k`-th value.
pub fn lanczos_smallest(op: &impl SymmetricOperator, k: usize) -> Result<EigenPairs> {
    let n = op.dim();
    if k > n {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds dimension {n}")));
    }
    if k == 0 {
        return Ok(EigenPairs { values: vec![], vectors: Matrix::zeros(n, 0), residuals: vec![] });
    }
    let mut rng = seed::rng(seed::derive(START_SEED, seed::stream::EIGEN_START));
    let (mut values, mut vectors, mut iterations) = lanczos_run(op, k, &[], &mut rng)?;
    while vectors.len() < n {
        let kk = k.min(n - vectors.len());
        let (extra_vals, extra_vecs, it) = lanczos_run(op, kk, &vectors, &mut rng)?;
        iterations += it;
        let kth = *values.last().unwrap();
        let tol = RESIDUAL_TOL * kth.abs().max(1.0);
        if extra_vals.first().is_none_or(|&v| v >= kth - tol) {
            break;
        }
        let mut merged: Vec<(f64, Vec<f64>)> = values
            .into_iter()
            .zip(vectors)
            .chain(extra_vals.into_iter().zip(extra_vecs))
            .collect();
        merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        merged.truncate(k);
        (values, vectors) = merged.into_iter().unzip();
    }
    let mut out = Matrix::zeros(n, k);
    for (i, v) in vectors.iter().enumerate() {
        out.column_mut(i).copy_from_slice(v);
    }
    finish(op, values, out, iterations)
}

/// One Lanczos sequence on the complement of `locked`; returns the `k`
/// smallest Ritz pairs.
fn lanczos_run(
    op: &impl SymmetricOperator,
    k: usize,
    locked: &[Vec<f64>],
    rng: &mut seed::Rng,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    let n = op.dim();
    let space = n - locked.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let no_start = || Error::EigenNoConvergence { max_residual: f64::NAN, iterations: 0 };

    let mut q = random_orthogonal(rng, locked, &basis, n).ok_or_else(no_start)?;
    let mut w = vec![0.0; n];
    let check_every = 5;

    loop {
        op.apply(&q, &mut w);
        let a = dot(&q, &w);
        axpy(-a, &q, &mut w);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            axpy(-b, prev, &mut w);
        }
        basis.push(q.clone());
        alpha.push(a);
        // Two passes of classical Gram-Schmidt against everything known.
        for _ in 0..2 {
            for v in locked.iter().chain(&basis) {
                let c = dot(v, &w);
                axpy(-c, v, &mut w);
            }
        }
        let b = norm(&w);
        let m = basis.len();

        let full = m == space;
        if full || (m >= k && m.is_multiple_of(check_every)) {
            let (theta, s) = tridiagonal_eigen(&alpha, &beta);
            let converged = (0..k).all(|i| {
                (b * s[(m - 1, i)]).abs() <= 0.1 * RESIDUAL_TOL * theta[i].abs().max(1.0)
            });
            if full || converged {
                let vectors = (0..k)
                    .map(|i| {
                        let mut v = vec![0.0; n];
                        for (j, bv) in basis.iter().enumerate() {
                            axpy(s[(j, i)], bv, &mut v);
                        }
                        let nv = norm(&v);
                        v.iter_mut().for_each(|x| *x /= nv);
                        v
                    })
                    .collect();
                return Ok((theta[..k].to_vec(), vectors, m));
            }
        }

        let scale = alpha.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
        if b <= 1e-10 * scale {
            beta.push(0.0);
            q = random_orthogonal(rng, locked, &basis, n).ok_or_else(no_start)?;
        } else {
            beta.push(b);
            q = w.iter().map(|x| x / b).collect();
        }
    }
}

/// Ascending eigen-decomposition of the symmetric tridiagonal matrix with
/// diagonal `alpha` and off-diagonal `beta` (the trailing entry of `beta`,
/// if any, is ignored).
fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::<f64>::zeros(m, m);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (values, vecs)
}

fn random_orthogonal(
    rng: &mut seed::Rng,
    locked: &[Vec<f64>],
    basis: &[Vec<f64>],
    n: usize,
) -> Option<Vec<f64>> {
    for _ in 0..10 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        for _ in 0..2 {
            for b in locked.iter().chain(basis) {
                let c = dot(b, &v);
                axpy(-c, b, &mut v);
            }
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

/// Fixes signs, measures residuals and enforces the residual contract.
fn finish(
    op: &impl SymmetricOperator,
    values: Vec<f64>,
    mut vectors: Matrix,
    iterations: usize,
) -> Result<EigenPairs> {
    let n = op.dim();
    let mut residuals = Vec::with_capacity(values.len());
    let mut hv = vec![0.0; n];
    let mut worst = 0.0f64;
    for (i, &lambda) in values.iter().enumerate() {
        // Deterministic sign: the entry of largest magnitude is positive.
        let col = vectors.column(i);
        let pivot = col.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            vectors.column_mut(i).neg_mut();
        }
        let v: Vec<f64> = vectors.column(i).iter().copied().collect();
        op.apply(&v, &mut hv);
        let res = hv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(res / lambda.abs().max(1.0));
        residuals.push(res);
    }
    if worst > RESIDUAL_TOL {
        return Err(Error::EigenNoConvergence { max_residual: worst, iterations });
    }
    Ok(EigenPairs { values, vectors, residuals })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
