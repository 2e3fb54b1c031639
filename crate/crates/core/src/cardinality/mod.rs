//! Server-side estimation of the number of global clusters.
//!
//! Centroids are first coarse-grained into a handful of nodes ([`gcs`]). On
//! the node distance matrix a short-distance threshold `T` is read off the
//! sorted pair distances at percentile `t`. The neighborhood size `b` grows
//! until the share of short pairs among mutual `b`-nearest-neighbor pairs
//! starts to drop; at the last `b` before the drop the mean distance over
//! strict natural-neighbor pairs becomes the linking radius, and the number
//! of connected components of the resulting graph is the cluster count.

pub mod gcs;

use std::collections::BTreeSet;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::model::{euclidean, Matrix, SeededRng};
use crate::{Error, Result};

pub use gcs::{gcs_reduce, GcsConfig, GcsOutput};

/// How natural-neighbor pairs are matched when computing the linking radius.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SnnMode {
    /// Mutual `b`-nearest neighbors that hold the same rank in each other's lists.
    #[default]
    Strict,
    /// Mutual `b`-nearest neighbors regardless of rank.
    Relaxed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SncConfig {
    /// Short-distance percentile, in `(0, 100)`.
    pub percentile: f64,
    /// Largest neighborhood tried; `None` means `min(ceil(m / 4), 30)`.
    pub b_max: Option<usize>,
    pub snn_mode: SnnMode,
    pub gcs_enabled: bool,
}

impl Default for SncConfig {
    fn default() -> Self {
        Self {
            percentile: 25.0,
            b_max: None,
            snn_mode: SnnMode::Strict,
            gcs_enabled: true,
        }
    }
}

impl SncConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return Err(Error::validation("percentile must be in (0, 100]"));
        }
        if self.b_max == Some(0) {
            return Err(Error::validation("b_max must be >= 1"));
        }
        Ok(())
    }

    /// Effective `b_max` when `nodes` nodes summarize `input` vectors. The
    /// default `min(ceil(input / 4), 30)` is kept inside `[2, nodes - 1]`
    /// (just 1 for two nodes).
    pub fn b_max_for(&self, input: usize, nodes: usize) -> usize {
        let b = self.b_max.unwrap_or_else(|| input.div_ceil(4).min(30)).max(2);
        b.min(nodes.saturating_sub(1)).max(1)
    }
}

/// Symmetric Euclidean distance matrix with zero diagonal.
pub fn distance_matrix(nodes: &Matrix) -> Matrix {
    let m = nodes.rows();
    let mut d = Matrix::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let v = euclidean(nodes.row(i), nodes.row(j));
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    d
}

/// The `ceil(t * M / 100)`-th smallest of the `M = m(m-1)/2` pair distances.
pub fn short_distance_threshold(dist: &Matrix, percentile: f64) -> f64 {
    let m = dist.rows();
    let mut pairs: Vec<f64> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .map(|(i, j)| dist.get(i, j))
        .collect();
    threshold_from_pairs(&mut pairs, percentile)
}

/// Sorts `pairs` ascending and returns the `ceil(t * len / 100)`-th entry.
pub fn threshold_from_pairs(pairs: &mut [f64], percentile: f64) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.sort_by(f64::total_cmp);
    let idx = (percentile * pairs.len() as f64 / 100.0).ceil() as usize;
    pairs[idx.clamp(1, pairs.len()) - 1]
}

/// Every node's other nodes ordered by distance, ties by index.
#[derive(Clone, Debug)]
pub struct NeighborRanks {
    order: Vec<Vec<usize>>,
    /// `rank[i][j]` is the 1-based rank of `j` in `i`'s list (0 for `i` itself).
    rank: Vec<Vec<usize>>,
}

impl NeighborRanks {
    pub fn new(dist: &Matrix) -> Self {
        let m = dist.rows();
        let mut order = Vec::with_capacity(m);
        let mut rank = vec![vec![0; m]; m];
        for i in 0..m {
            let mut others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| dist.get(i, a).total_cmp(&dist.get(i, b)).then(a.cmp(&b)));
            for (r, &j) in others.iter().enumerate() {
                rank[i][j] = r + 1;
            }
            order.push(others);
        }
        Self { order, rank }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The `b` nearest neighbors of `i`, nearest first.
    pub fn nearest(&self, i: usize, b: usize) -> &[usize] {
        &self.order[i][..b.min(self.order[i].len())]
    }

    pub fn rank(&self, i: usize, j: usize) -> usize {
        self.rank[i][j]
    }

    /// Loose natural neighbors: mutual membership in `b`-nearest lists.
    pub fn lnn_pairs(&self, b: usize) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for i in 0..self.len() {
            for &j in self.nearest(i, b) {
                if i < j && self.rank(j, i) <= b {
                    out.insert((i, j));
                }
            }
        }
        out
    }

    /// Strict natural neighbors: loose pairs holding the same rank both ways.
    pub fn strict_pairs(&self, b: usize) -> BTreeSet<(usize, usize)> {
        self.lnn_pairs(b)
            .into_iter()
            .filter(|&(i, j)| self.rank(i, j) == self.rank(j, i))
            .collect()
    }

    pub fn snn_pairs(&self, b: usize, mode: SnnMode) -> BTreeSet<(usize, usize)> {
        match mode {
            SnnMode::Strict => self.strict_pairs(b),
            SnnMode::Relaxed => self.lnn_pairs(b),
        }
    }
}

/// Natural-neighbor pairs of `dist` at neighborhood size `b`.
pub fn snn_pairs(dist: &Matrix, b: usize, mode: SnnMode) -> BTreeSet<(usize, usize)> {
    NeighborRanks::new(dist).snn_pairs(b, mode)
}

/// Result of the neighborhood-size scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BSelection {
    pub b_optimal: usize,
    /// `P_1, P_2, ...` up to the first decline (or `b_max`).
    pub p_curve: Vec<f64>,
    /// Set when the curve never declined and `b_max` was used.
    pub fallback: bool,
}

fn short_pair_ratio(dist: &Matrix, pairs: &BTreeSet<(usize, usize)>, threshold: f64) -> f64 {
    if pairs.is_empty() {
        return 1.0;
    }
    let short = pairs.iter().filter(|&&(i, j)| dist.get(i, j) < threshold).count();
    short as f64 / pairs.len() as f64
}

/// Picks the neighborhood size just before the short-pair ratio declines.
pub fn select_b(dist: &Matrix, threshold: f64, b_max: usize) -> BSelection {
    select_b_with(&NeighborRanks::new(dist), dist, threshold, b_max)
}

fn select_b_with(ranks: &NeighborRanks, dist: &Matrix, threshold: f64, b_max: usize) -> BSelection {
    let b_max = b_max.min(ranks.len().saturating_sub(1)).max(1);
    let mut p_curve: Vec<f64> = Vec::with_capacity(b_max);
    for b in 1..=b_max {
        let p = short_pair_ratio(dist, &ranks.lnn_pairs(b), threshold);
        if let Some(&prev) = p_curve.last() {
            if prev > p {
                p_curve.push(p);
                return BSelection {
                    b_optimal: b - 1,
                    p_curve,
                    fallback: false,
                };
            }
        }
        p_curve.push(p);
    }
    BSelection {
        b_optimal: b_max,
        p_curve,
        fallback: true,
    }
}

/// Diagnostics of one cluster-count estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborGraph {
    pub num_nodes: usize,
    pub lnn_pairs: Vec<(usize, usize)>,
    pub snn_pairs: Vec<(usize, usize)>,
    pub b_optimal: usize,
    pub p_curve: Vec<f64>,
    /// The scan hit `b_max` without a decline.
    pub b_fallback: bool,
    /// Short-distance threshold `T`.
    pub threshold: f64,
    /// Linking radius: mean natural-neighbor pair distance.
    pub d_s: f64,
    /// No natural-neighbor pairs existed; `T` was used as the radius.
    pub d_s_fallback: bool,
    /// Connected-component id of every node.
    pub components: Vec<usize>,
}

/// Cluster count plus diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub k_star: usize,
    pub graph: NeighborGraph,
}

/// Labels connected components of the graph with an edge wherever
/// `dist <= radius`; ids are assigned in order of first node.
pub fn threshold_components(dist: &Matrix, radius: f64) -> Vec<usize> {
    let m = dist.rows();
    let mut uf = UnionFind::<usize>::new(m);
    for i in 0..m {
        for j in i + 1..m {
            if dist.get(i, j) <= radius {
                uf.union(i, j);
            }
        }
    }
    let roots: Vec<usize> = (0..m).map(|i| uf.find(i)).collect();
    crate::model::Partition::from_labels(&roots).assignment().to_vec()
}

/// Estimates the number of clusters among `nodes`.
pub fn estimate_k(nodes: &Matrix, cfg: &SncConfig) -> Result<Estimate> {
    estimate_k_from(nodes, nodes.rows(), cfg)
}

/// [`estimate_k`] for nodes that coarse-grain `input_count` centroids; the
/// default `b_max` is derived from `input_count`.
pub fn estimate_k_from(nodes: &Matrix, input_count: usize, cfg: &SncConfig) -> Result<Estimate> {
    cfg.validate()?;
    let m = nodes.rows();
    if m == 0 {
        return Err(Error::validation("no nodes to estimate from"));
    }
    if m == 1 {
        return Ok(Estimate {
            k_star: 1,
            graph: NeighborGraph {
                num_nodes: 1,
                lnn_pairs: vec![],
                snn_pairs: vec![],
                b_optimal: 0,
                p_curve: vec![],
                b_fallback: true,
                threshold: 0.0,
                d_s: 0.0,
                d_s_fallback: true,
                components: vec![0],
            },
        });
    }
    let dist = distance_matrix(nodes);
    let threshold = short_distance_threshold(&dist, cfg.percentile);
    let ranks = NeighborRanks::new(&dist);
    let selection = select_b_with(&ranks, &dist, threshold, cfg.b_max_for(input_count, m));
    let lnn = ranks.lnn_pairs(selection.b_optimal);
    let snn = ranks.snn_pairs(selection.b_optimal, cfg.snn_mode);
    let (d_s, d_s_fallback) = if snn.is_empty() {
        (threshold, true)
    } else {
        let total: f64 = snn.iter().map(|&(i, j)| dist.get(i, j)).sum();
        (total / snn.len() as f64, false)
    };
    let components = threshold_components(&dist, d_s);
    let k_star = components.iter().copied().max().map_or(0, |c| c + 1);
    Ok(Estimate {
        k_star,
        graph: NeighborGraph {
            num_nodes: m,
            lnn_pairs: lnn.into_iter().collect(),
            snn_pairs: snn.into_iter().collect(),
            b_optimal: selection.b_optimal,
            p_curve: selection.p_curve,
            b_fallback: selection.fallback,
            threshold,
            d_s,
            d_s_fallback,
            components,
        },
    })
}

/// Coarse-graining followed by estimation, as run on the server.
#[derive(Clone, Debug, PartialEq)]
pub struct CardinalityReport {
    pub gcs: GcsOutput,
    pub estimate: Estimate,
}

pub fn select_cluster_count(
    centroids: &Matrix,
    snc: &SncConfig,
    gcs_cfg: &GcsConfig,
    rng: &mut SeededRng,
) -> Result<CardinalityReport> {
    let gcs = gcs_reduce(centroids, gcs_cfg, snc.gcs_enabled, rng)?;
    let estimate = estimate_k_from(&gcs.nodes, centroids.rows(), snc)?;
    Ok(CardinalityReport { gcs, estimate })
}
