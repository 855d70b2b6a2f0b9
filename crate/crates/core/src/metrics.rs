//! Overlap, normalized mutual information and hard modularity.

use itertools::Itertools;
use pathfinding::prelude::{kuhn_munkres, Matrix as AssignMatrix};

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelVector};

/// Largest label count for which overlap enumerates permutations directly.
pub const EXHAUSTIVE_LIMIT: usize = 8;

/// `counts[i][j] = |{u : y(u) = i ∧ ŷ(u) = j}|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub rows: usize,
    pub cols: usize,
    pub counts: Vec<Vec<u64>>,
    pub n: u64,
}

impl ConfusionMatrix {
    pub fn new(y: &[usize], yhat: &[usize]) -> Result<Self> {
        Self::with_size(y, yhat, label_bound(y), label_bound(yhat))
    }

    pub fn with_size(y: &[usize], yhat: &[usize], rows: usize, cols: usize) -> Result<Self> {
        if y.len() != yhat.len() {
            return Err(Error::dims(y.len(), yhat.len()));
        }
        let mut counts = vec![vec![0u64; cols]; rows];
        for (&a, &b) in y.iter().zip(yhat) {
            if a >= rows || b >= cols {
                return Err(Error::InvalidParameter(format!(
                    "label pair ({a}, {b}) outside {rows}x{cols}"
                )));
            }
            counts[a][b] += 1;
        }
        Ok(ConfusionMatrix { rows, cols, counts, n: y.len() as u64 })
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        (0..self.cols).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }
}

fn label_bound(y: &[usize]) -> usize {
    y.iter().max().map_or(0, |m| m + 1)
}

/// Largest number of nodes matched by a one-to-one relabeling, for a square
/// confusion matrix.
pub fn max_matched(cm: &ConfusionMatrix) -> u64 {
    if cm.rows <= EXHAUSTIVE_LIMIT {
        max_matched_exhaustive(cm)
    } else {
        max_matched_assignment(cm)
    }
}

pub fn max_matched_exhaustive(cm: &ConfusionMatrix) -> u64 {
    let c = cm.rows;
    (0..c)
        .permutations(c)
        .map(|p| (0..c).map(|i| cm.counts[i][p[i]]).sum::<u64>())
        .max()
        .unwrap_or(0)
}

pub fn max_matched_assignment(cm: &ConfusionMatrix) -> u64 {
    if cm.rows == 0 {
        return 0;
    }
    let weights = AssignMatrix::from_rows(
        cm.counts.iter().map(|r| r.iter().map(|&x| x as i64).collect::<Vec<_>>()),
    )
    .expect("square confusion matrix");
    kuhn_munkres(&weights).0 as u64
}

/// Permutation-maximized agreement rescaled so that chance is 0 and
/// perfect recovery is 1.
pub fn overlap(y: &[usize], yhat: &[usize], c: usize) -> Result<f64> {
    if c == 0 {
        return Err(Error::InvalidParameter("overlap needs c >= 1".into()));
    }
    let cm = ConfusionMatrix::with_size(y, yhat, c, c)?;
    if cm.n == 0 {
        return Err(Error::InvalidParameter("overlap of empty labelings".into()));
    }
    let matched = max_matched(&cm) as f64 / cm.n as f64;
    let chance = 1.0 / c as f64;
    if c == 1 {
        return Ok(1.0);
    }
    Ok((matched - chance) / (1.0 - chance))
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&x| x > 0)
        .map(|&x| {
            let p = x as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the arithmetic mean of the entropies.
///
/// Degenerate cases: if both labelings are constant the result is 1; if
/// only one is, the result is 0.
pub fn nmi(y: &[usize], yhat: &[usize]) -> Result<f64> {
    let cm = ConfusionMatrix::new(y, yhat)?;
    if cm.n == 0 {
        return Err(Error::InvalidParameter("nmi of empty labelings".into()));
    }
    let n = cm.n as f64;
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    let hy = entropy(&rows, n);
    let hyhat = entropy(&cols, n);
    if hy == 0.0 && hyhat == 0.0 {
        return Ok(1.0);
    }
    if hy == 0.0 || hyhat == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in cm.counts.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (0.5 * (hy + hyhat))).max(0.0))
}

/// Newman modularity of a hard partition:
/// `Σ_c [Σ_{u,v∈c} A_uv − (Σ_{u∈c} d_u)²/‖A‖₁] / ‖A‖₁`.
pub fn hard_modularity(g: &Graph, y: &LabelVector) -> Result<f64> {
    if y.len() != g.n() {
        return Err(Error::dims(g.n(), y.len()));
    }
    if g.edge_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let c = y.label_bound();
    let mut internal = vec![0.0; c];
    let mut degree_sum = vec![0.0; c];
    for &(u, v) in g.edges() {
        if y[u] == y[v] {
            internal[y[u]] += 2.0;
        }
    }
    for u in 0..g.n() {
        degree_sum[y[u]] += g.degree(u) as f64;
    }
    let m2 = g.a1_norm();
    let q: f64 = internal
        .iter()
        .zip(&degree_sum)
        .map(|(&e, &d)| e - d * d / m2)
        .sum();
    Ok(q / m2)
}
