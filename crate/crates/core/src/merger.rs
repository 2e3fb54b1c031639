//! Server-side hierarchical merging.
//!
//! All uploaded blocks start as active clusters. Each iteration merges the
//! pair with the smallest special distance
//!
//! ```text
//! d(a, b) = dist(c_a, c_b) * o(a, b) * max(|s_a - s_b|, floor)^beta
//! o(a, b) = dist(c_a, c_b) / (r_a + r_b)
//! ```
//!
//! and recomputes size, centroid, radius and standard deviation of the union
//! from the pooled surrogate samples, until `k*` clusters remain.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{euclidean, Matrix};
use crate::partitioner::LocalPartition;
use crate::surrogate::{centroid_radius_stddev, to_json_precise, BlockId, SurrogateBlock};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeConfig {
    /// Exponent on the standard-deviation similarity term.
    pub beta: f64,
    /// Lower bound on `|s_a - s_b|` (and on `r_a + r_b` when both radii vanish).
    pub sim_floor: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            sim_floor: 1e-6,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) {
            return Err(Error::validation("beta must be >= 0"));
        }
        if !(self.sim_floor > 0.0) {
            return Err(Error::validation("sim_floor must be positive"));
        }
        Ok(())
    }
}

/// A cluster on the server: a set of uploaded blocks and their pooled statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveCluster {
    pub blocks: Vec<BlockId>,
    /// Indices into the merged block list; their samples form the pool.
    pub block_indices: Vec<usize>,
    pub size: usize,
    pub centroid: Vec<f64>,
    pub radius: f64,
    pub stddev: Vec<f64>,
}

impl ActiveCluster {
    /// An unmerged block, described by its uploaded statistics.
    pub fn from_block(index: usize, block: &SurrogateBlock) -> Self {
        Self {
            blocks: vec![block.summary.id],
            block_indices: vec![index],
            size: block.samples.rows(),
            centroid: block.summary.centroid.clone(),
            radius: block.summary.radius,
            stddev: block.summary.stddev.clone(),
        }
    }

    /// Union of two clusters with statistics recomputed from pooled samples.
    pub fn merged(a: &ActiveCluster, b: &ActiveCluster, blocks: &[SurrogateBlock]) -> Self {
        let mut block_indices = a.block_indices.clone();
        block_indices.extend_from_slice(&b.block_indices);
        let mut ids = a.blocks.clone();
        ids.extend_from_slice(&b.blocks);
        let d = a.centroid.len();
        let rows = block_indices
            .iter()
            .flat_map(|&i| blocks[i].samples.iter_rows());
        let (size, centroid, radius, stddev) = centroid_radius_stddev(rows, d);
        debug_assert_eq!(size, a.size + b.size);
        Self {
            blocks: ids,
            block_indices,
            size,
            centroid,
            radius,
            stddev,
        }
    }
}

/// Special distance between two clusters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpecialDistance {
    pub value: f64,
    pub overlap: f64,
    pub similarity: f64,
    /// Both radii were zero and the floor stood in for their sum.
    pub zero_radius: bool,
}

pub fn special_distance(a: &ActiveCluster, b: &ActiveCluster, cfg: &MergeConfig) -> SpecialDistance {
    let dist = euclidean(&a.centroid, &b.centroid);
    let radii = a.radius + b.radius;
    let zero_radius = radii <= 0.0;
    let overlap = dist / if zero_radius { cfg.sim_floor } else { radii };
    let spread = euclidean(&a.stddev, &b.stddev).max(cfg.sim_floor);
    let similarity = if cfg.beta == 0.0 { 1.0 } else { spread.powf(cfg.beta) };
    SpecialDistance {
        value: dist * overlap * similarity,
        overlap,
        similarity,
        zero_radius,
    }
}

/// One merge step: the two slots joined and their distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub kept: usize,
    pub absorbed: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeOutcome {
    pub clusters: Vec<ActiveCluster>,
    /// Final cluster id of every block.
    pub assignment: BTreeMap<BlockId, usize>,
    /// Merge steps in order; slots are initial block indices.
    pub log: Vec<MergeStep>,
}

impl MergeOutcome {
    pub fn report(&self) -> MergeReport {
        MergeReport {
            k_star: self.clusters.len(),
            clusters: self
                .clusters
                .iter()
                .map(|c| ClusterReport {
                    size: c.size,
                    centroid: c.centroid.clone(),
                    radius: c.radius,
                })
                .collect(),
            block_assignment: self
                .assignment
                .iter()
                .map(|(id, &c)| (id.to_string(), c))
                .collect(),
        }
    }
}

/// Cached nearest partner of a slot among higher slots.
#[derive(Clone, Copy)]
struct RowMin {
    value: f64,
    partner: usize,
}

const NONE: usize = usize::MAX;

struct MergeState<'a> {
    slots: Vec<Option<ActiveCluster>>,
    rows: Vec<RowMin>,
    cfg: &'a MergeConfig,
}

impl MergeState<'_> {
    fn distance(&self, i: usize, j: usize) -> f64 {
        let (Some(a), Some(b)) = (&self.slots[i], &self.slots[j]) else {
            return f64::INFINITY;
        };
        special_distance(a, b, self.cfg).value
    }

    fn refresh_row(&mut self, i: usize) {
        let mut best = RowMin {
            value: f64::INFINITY,
            partner: NONE,
        };
        if self.slots[i].is_some() {
            for j in i + 1..self.slots.len() {
                if self.slots[j].is_none() {
                    continue;
                }
                let v = self.distance(i, j);
                if v < best.value || best.partner == NONE {
                    best = RowMin { value: v, partner: j };
                }
            }
        }
        self.rows[i] = best;
    }

    /// Lexicographically smallest pair among the minimal distances.
    fn closest_pair(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            if row.partner == NONE || self.slots[i].is_none() {
                continue;
            }
            if best.is_none_or(|(_, _, v)| row.value < v) {
                best = Some((i, row.partner, row.value));
            }
        }
        best
    }
}

/// Merges `blocks` bottom-up until `k_star` clusters remain.
///
/// Exactly `blocks.len() - k_star` merges are performed. Ties in the
/// minimal distance go to the lexicographically smallest slot pair.
pub fn merge_to_k(blocks: &[SurrogateBlock], k_star: usize, cfg: &MergeConfig) -> Result<MergeOutcome> {
    cfg.validate()?;
    let k0 = blocks.len();
    if k_star == 0 {
        return Err(Error::validation("target cluster count must be >= 1"));
    }
    if k_star > k0 {
        return Err(Error::validation(format!(
            "target of {k_star} clusters exceeds the {k0} uploaded subclusters; \
             lower the target or partition clients more finely"
        )));
    }
    let mut state = MergeState {
        slots: blocks
            .iter()
            .enumerate()
            .map(|(i, b)| Some(ActiveCluster::from_block(i, b)))
            .collect(),
        rows: vec![
            RowMin {
                value: f64::INFINITY,
                partner: NONE,
            };
            k0
        ],
        cfg,
    };
    for i in 0..k0 {
        state.refresh_row(i);
    }

    let mut log = Vec::with_capacity(k0 - k_star);
    for _ in 0..k0 - k_star {
        let (p, q, distance) = state
            .closest_pair()
            .ok_or_else(|| Error::Internal("no mergeable pair left".into()))?;
        let a = state.slots[p].take().expect("active slot");
        let b = state.slots[q].take().expect("active slot");
        state.slots[p] = Some(ActiveCluster::merged(&a, &b, blocks));
        log.push(MergeStep {
            kept: p,
            absorbed: q,
            distance,
        });

        state.refresh_row(p);
        state.rows[q] = RowMin {
            value: f64::INFINITY,
            partner: NONE,
        };
        for i in 0..k0 {
            if i == p || state.slots[i].is_none() {
                continue;
            }
            let partner = state.rows[i].partner;
            if partner == p || partner == q {
                state.refresh_row(i);
            } else if i < p {
                let v = state.distance(i, p);
                let row = &mut state.rows[i];
                if v < row.value || (v == row.value && p < row.partner) {
                    *row = RowMin { value: v, partner: p };
                }
            }
        }
    }

    let mut clusters = Vec::with_capacity(k_star);
    let mut assignment = BTreeMap::new();
    for cluster in state.slots.into_iter().flatten() {
        for &id in &cluster.blocks {
            assignment.insert(id, clusters.len());
        }
        clusters.push(cluster);
    }
    Ok(MergeOutcome {
        clusters,
        assignment,
        log,
    })
}

/// Response message: final clusters and the block-to-cluster map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub k_star: usize,
    pub clusters: Vec<ClusterReport>,
    pub block_assignment: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub size: usize,
    pub centroid: Vec<f64>,
    pub radius: f64,
}

impl MergeReport {
    pub fn to_json(&self) -> String {
        to_json_precise(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Protocol(format!("malformed merge report: {e}")))
    }

    /// Parsed block ids.
    pub fn assignment(&self) -> Result<BTreeMap<BlockId, usize>> {
        self.block_assignment
            .iter()
            .map(|(k, &v)| Ok((k.parse::<BlockId>()?, v)))
            .collect()
    }
}

/// Global label of every local point of one client.
pub fn relabel_client(part: &LocalPartition, assignment: &BTreeMap<BlockId, usize>) -> Result<Vec<usize>> {
    let n: usize = part.subclusters.iter().map(Vec::len).sum();
    let mut labels = vec![usize::MAX; n];
    for (g, members) in part.subclusters.iter().enumerate() {
        let id = BlockId {
            client: part.client_id,
            index: g,
        };
        let &label = assignment
            .get(&id)
            .ok_or_else(|| Error::Protocol(format!("no global cluster for block {id}")))?;
        for &i in members {
            labels[i] = label;
        }
    }
    Ok(labels)
}

/// Global labels for every client, in client order.
pub fn relabel_clients(parts: &[LocalPartition], assignment: &BTreeMap<BlockId, usize>) -> Result<Vec<Vec<usize>>> {
    for id in assignment.keys() {
        let known = parts
            .iter()
            .any(|p| p.client_id == id.client && id.index < p.subclusters.len());
        if !known {
            return Err(Error::Protocol(format!("assignment names unknown block {id}")));
        }
    }
    parts.iter().map(|p| relabel_client(p, assignment)).collect()
}

/// Batch statistics of the pooled samples of `block_indices`, for checks.
pub fn pooled_statistics(blocks: &[SurrogateBlock], block_indices: &[usize]) -> (usize, Vec<f64>, f64, Vec<f64>) {
    let d = blocks.first().map_or(0, |b| b.samples.cols());
    let mut all = Vec::new();
    for &i in block_indices {
        all.extend(blocks[i].samples.iter_rows().map(<[f64]>::to_vec));
    }
    let pooled = Matrix::from_rows(&all).unwrap_or_else(|_| Matrix::zeros(0, d));
    centroid_radius_stddev(pooled.iter_rows(), d)
}
