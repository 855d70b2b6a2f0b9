//! Lloyd's k-means with k-means++ seeding and restarts.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{LabelVector, Matrix};
use crate::seed;

#[derive(Debug, Clone, Copy)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop when the objective improves by less than this fraction.
    pub rel_tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { restarts: 10, max_iter: 100, rel_tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: LabelVector,
    /// `k × dim`.
    pub centroids: Matrix,
    /// Within-cluster sum of squares.
    pub inertia: f64,
    /// Objective after every assignment step of the winning restart.
    pub trace: Vec<f64>,
}

/// Clusters the rows of `points` into `k` groups.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<KMeansResult> {
    kmeans_with(points, k, seed, &KMeansConfig::default())
}

pub fn kmeans_with(points: &Matrix, k: usize, seed: u64, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || n < k {
        return Err(Error::InvalidParameter(format!("k-means needs 1 <= k <= N, got k={k} N={n}")));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| points.row(i).iter().copied().collect()).collect();
    let mut best: Option<KMeansResult> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut rng = seed::rng(seed::derive(seed, restart as u64));
        let run = lloyd(&rows, k, &mut rng, cfg);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn plus_plus(rows: &[Vec<f64>], k: usize, rng: &mut seed::Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centroids = vec![rows[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = rows[pick].clone();
        for (di, r) in d2.iter_mut().zip(rows) {
            *di = di.min(sq_dist(r, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Nearest centroid, ties to the lowest index.
fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_dist(row, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(rows: &[Vec<f64>], centroids: &[Vec<f64>], labels: &mut [usize], cost: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for (i, r) in rows.iter().enumerate() {
        let (c, d) = nearest(r, centroids);
        labels[i] = c;
        cost[i] = d;
        total += d;
    }
    total
}

/// Moves the costliest point of a multi-member cluster into each empty
/// cluster. Each move sets that point's cost to zero, so the objective does
/// not increase.
fn reseed_empty(
    rows: &[Vec<f64>],
    centroids: &mut [Vec<f64>],
    labels: &mut [usize],
    cost: &mut [f64],
) -> bool {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    let mut changed = false;
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let far = (0..rows.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .max_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(b.cmp(&a)));
        let Some(i) = far else { break };
        sizes[labels[i]] -= 1;
        sizes[c] = 1;
        labels[i] = c;
        cost[i] = 0.0;
        centroids[c] = rows[i].clone();
        changed = true;
    }
    changed
}

fn lloyd(rows: &[Vec<f64>], k: usize, rng: &mut seed::Rng, cfg: &KMeansConfig) -> KMeansResult {
    let n = rows.len();
    let dim = rows[0].len();
    let mut centroids = plus_plus(rows, k, rng);
    let mut labels = vec![0usize; n];
    let mut cost = vec![0.0; n];
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;

    for _ in 0..cfg.max_iter.max(1) {
        assign(rows, &centroids, &mut labels, &mut cost);
        reseed_empty(rows, &mut centroids, &mut labels, &mut cost);
        let obj: f64 = cost.iter().sum();
        debug_assert!(
            obj <= prev * (1.0 + 1e-12) + 1e-300,
            "k-means objective increased: {prev} -> {obj}"
        );
        trace.push(obj);
        let done = prev.is_finite() && prev - obj <= cfg.rel_tol * prev;
        prev = obj;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (r, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(r) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if done {
            break;
        }
    }
    // Centroids are now the means of `labels`; refresh the cost under them.
    for (i, r) in rows.iter().enumerate() {
        cost[i] = sq_dist(r, &centroids[labels[i]]);
    }
    let inertia = cost.iter().sum();
    let mut cen = Matrix::zeros(k, dim);
    for (c, row) in centroids.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            cen[(c, j)] = x;
        }
    }
    KMeansResult { labels: LabelVector(labels), centroids: cen, inertia, trace }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = Matrix::from_row_slice(4, 2, &[0.0, 0.0, 2.0, 0.0, 0.0, 2.0, 2.0, 2.0]);
        let res = kmeans(&pts, 1, 3).unwrap();
        assert!(res.labels.iter().all(|&l| l == 0));
        assert_abs_diff_eq!(res.centroids[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(res.centroids[(0, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn distinct_locations_recovered_exactly() {
        let locs = [[0.0, 0.0], [5.0, 1.0], [-3.0, 4.0]];
        let mut data = Vec::new();
        let mut truth = Vec::new();
        for i in 0..30 {
            data.extend_from_slice(&locs[i % 3]);
            truth.push(i % 3);
        }
        let pts = Matrix::from_row_slice(30, 2, &data);
        let res = kmeans(&pts, 3, 11).unwrap();
        assert_abs_diff_eq!(res.inertia, 0.0, epsilon = 1e-12);
        for i in 0..30 {
            for j in 0..30 {
                assert_eq!(truth[i] == truth[j], res.labels[i] == res.labels[j]);
            }
        }
    }

    #[test]
    fn every_cluster_used_even_with_duplicates() {
        let mut data = vec![0.0; 20];
        data[19] = 1.0;
        let pts = Matrix::from_row_slice(10, 2, &data);
        let res = kmeans(&pts, 4, 0).unwrap();
        assert_eq!(res.labels.distinct(), 4);
    }

    #[test]
    fn objective_non_increasing() {
        let mut rng = seed::rng(5);
        let data: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let pts = Matrix::from_row_slice(100, 3, &data);
        let res = kmeans_with(&pts, 6, 2, &KMeansConfig { restarts: 1, max_iter: 100, rel_tol: 0.0 }).unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn rejects_more_clusters_than_points() {
        assert!(kmeans(&Matrix::zeros(2, 2), 3, 0).is_err());
    }
}
