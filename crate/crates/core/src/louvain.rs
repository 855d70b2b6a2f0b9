//! Louvain greedy modularity maximization.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelVector};
use crate::seed;

/// Smallest modularity gain that counts as an improvement.
pub const GAIN_THRESHOLD: f64 = 1e-7;

/// Weighted graph of communities from a previous level.
///
/// `adj[i]` lists `(j, w)` for `j ≠ i`; `self_loops[i]` holds twice the
/// internal edge weight of supernode `i`, so `Σ_ij A'_ij` stays equal to
/// `‖A‖₁` of the original graph.
#[derive(Debug, Clone)]
pub struct WeightedAggGraph {
    pub adj: Vec<Vec<(usize, f64)>>,
    pub self_loops: Vec<f64>,
}

impl WeightedAggGraph {
    pub fn from_graph(g: &Graph) -> Self {
        WeightedAggGraph {
            adj: (0..g.n())
                .map(|u| g.neighbors(u).iter().map(|&v| (v, 1.0)).collect())
                .collect(),
            self_loops: vec![0.0; g.n()],
        }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn strength(&self, i: usize) -> f64 {
        self.self_loops[i] + self.adj[i].iter().map(|&(_, w)| w).sum::<f64>()
    }

    pub fn total_weight(&self) -> f64 {
        (0..self.n()).map(|i| self.strength(i)).sum()
    }

    pub fn modularity(&self, community: &[usize]) -> f64 {
        let m2 = self.total_weight();
        let c = community.iter().max().map_or(0, |m| m + 1);
        let mut internal = vec![0.0; c];
        let mut tot = vec![0.0; c];
        for i in 0..self.n() {
            let ci = community[i];
            internal[ci] += self.self_loops[i];
            tot[ci] += self.strength(i);
            for &(j, w) in &self.adj[i] {
                if community[j] == ci {
                    internal[ci] += w;
                }
            }
        }
        internal.iter().zip(&tot).map(|(e, t)| e - t * t / m2).sum::<f64>() / m2
    }

    /// Collapses each community into one supernode. `community` must use
    /// contiguous labels `0..c`.
    pub fn aggregate(&self, community: &[usize]) -> Self {
        let c = community.iter().max().map_or(0, |m| m + 1);
        let mut self_loops = vec![0.0; c];
        let mut maps: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); c];
        for i in 0..self.n() {
            let ci = community[i];
            self_loops[ci] += self.self_loops[i];
            for &(j, w) in &self.adj[i] {
                let cj = community[j];
                if cj == ci {
                    self_loops[ci] += w;
                } else {
                    *maps[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        WeightedAggGraph {
            adj: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loops,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LouvainResult {
    pub labels: LabelVector,
    pub modularity: f64,
    /// Modularity after each completed level.
    pub level_modularity: Vec<f64>,
}

/// Runs Louvain until a level makes no improving move.
pub fn louvain(g: &Graph, seed: u64) -> Result<LouvainResult> {
    if g.edge_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut rng = seed::rng(seed::derive(seed, seed::stream::LOUVAIN));
    let mut agg = WeightedAggGraph::from_graph(g);
    let total = agg.total_weight();
    let mut labels: Vec<usize> = (0..g.n()).collect();
    let mut current = agg.modularity(&(0..agg.n()).collect::<Vec<_>>());
    let mut level_modularity = Vec::new();

    loop {
        let (community, improved, q) = one_level(&agg, current, &mut rng);
        if !improved {
            break;
        }
        let community = compact(&community);
        for l in labels.iter_mut() {
            *l = community[*l];
        }
        agg = agg.aggregate(&community);
        debug_assert!((agg.total_weight() - total).abs() <= 1e-9 * total);
        debug_assert!(q >= current - 1e-12);
        current = q;
        level_modularity.push(q);
    }
    let labels = LabelVector(compact(&labels));
    let modularity = crate::metrics::hard_modularity(g, &labels)?;
    Ok(LouvainResult { labels, modularity, level_modularity })
}

fn compact(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Local moving phase on `agg`; returns the community of each supernode,
/// whether any move was made, and the resulting modularity.
fn one_level(agg: &WeightedAggGraph, start_q: f64, rng: &mut seed::Rng) -> (Vec<usize>, bool, f64) {
    let n = agg.n();
    let m2 = agg.total_weight();
    let strength: Vec<f64> = (0..n).map(|i| agg.strength(i)).collect();
    let mut community: Vec<usize> = (0..n).collect();
    let mut tot = strength.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut q = start_q;
    let mut improved = false;
    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    loop {
        let mut moved = false;
        for &i in &order {
            let old = community[i];
            let ki = strength[i];
            for &(j, w) in &agg.adj[i] {
                let cj = community[j];
                if link[cj] == 0.0 {
                    touched.push(cj);
                }
                link[cj] += w;
            }
            tot[old] -= ki;
            // Gain of joining c (up to the common factor 2/‖A‖₁).
            let gain = |c: usize, link_c: f64| link_c - ki * tot[c] / m2;
            let old_gain = gain(old, link[old]);
            let mut best = (old, old_gain);
            for &c in &touched {
                let gc = gain(c, link[c]);
                if gc > best.1 || (gc == best.1 && c < best.0) {
                    best = (c, gc);
                }
            }
            let delta = 2.0 * (best.1 - old_gain) / m2;
            if best.0 != old && delta > GAIN_THRESHOLD {
                community[i] = best.0;
                tot[best.0] += ki;
                q += delta;
                moved = true;
                improved = true;
            } else {
                tot[old] += ki;
            }
            for &c in &touched {
                link[c] = 0.0;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    (community, improved, q)
}
