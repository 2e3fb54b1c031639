//! Growing cell structures over the uploaded subcluster centroids.
//!
//! The network starts as a triangle of randomly chosen centroids. Each signal
//! is a uniformly drawn centroid; the nearest node moves towards it at
//! `winner_rate` and its topological neighbors at `neighbor_rate`. Every
//! `insertion_interval` signals a node is inserted halfway between the node
//! with the largest accumulated quantization error and its farthest neighbor,
//! and wired to both of them and to their common neighbors so the cell
//! complex stays triangular.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{squared_distance, Matrix, SeededRng};
use crate::{Error, Result};

/// Per-signal decay of accumulated node error.
const ERROR_DECAY: f64 = 0.995;

/// Upper bound on batch refinement passes after growth.
const REFINE_ROUNDS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcsConfig {
    /// Node budget; `None` picks `ceil(sqrt(m))` clamped to `[4, m]`.
    pub target_nodes: Option<usize>,
    pub insertion_interval: usize,
    pub winner_rate: f64,
    pub neighbor_rate: f64,
    /// Total signals presented; `None` means `50 * m`.
    pub max_signals: Option<usize>,
}

impl Default for GcsConfig {
    fn default() -> Self {
        Self {
            target_nodes: None,
            insertion_interval: 100,
            winner_rate: 0.06,
            neighbor_rate: 0.006,
            max_signals: None,
        }
    }
}

impl GcsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.neighbor_rate && self.neighbor_rate < self.winner_rate && self.winner_rate < 1.0) {
            return Err(Error::validation(
                "GCS rates must satisfy 0 < neighbor_rate < winner_rate < 1",
            ));
        }
        if self.insertion_interval == 0 {
            return Err(Error::validation("insertion_interval must be >= 1"));
        }
        Ok(())
    }

    /// Node budget for `m` centroids.
    pub fn target_for(&self, m: usize) -> usize {
        self.target_nodes
            .unwrap_or_else(|| ((m as f64).sqrt().ceil() as usize).clamp(4, m.max(4)))
    }
}

/// Output of [`gcs_reduce`].
#[derive(Clone, Debug, PartialEq)]
pub struct GcsOutput {
    pub nodes: Matrix,
    /// Set when the input was returned unchanged because it had fewer
    /// centroids than the node budget (or fewer than three).
    pub passthrough: bool,
    /// Nodes dropped because no centroid had them as nearest node.
    pub dead_removed: usize,
    /// Dead nodes moved onto badly served centroids during refinement.
    pub relocated: usize,
    pub signals: usize,
}

struct Network {
    pos: Vec<Vec<f64>>,
    error: Vec<f64>,
    edges: Vec<BTreeSet<usize>>,
}

impl Network {
    fn nearest(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.pos.iter().enumerate() {
            let d = squared_distance(p, x);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    fn connect(&mut self, a: usize, b: usize) {
        self.edges[a].insert(b);
        self.edges[b].insert(a);
    }

    fn disconnect(&mut self, a: usize, b: usize) {
        self.edges[a].remove(&b);
        self.edges[b].remove(&a);
    }

    fn insert(&mut self) {
        let q = self
            .error
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &e)| if e > acc.1 { (i, e) } else { acc })
            .0;
        let Some(f) = self.edges[q].iter().copied().max_by(|&a, &b| {
            squared_distance(&self.pos[q], &self.pos[a])
                .total_cmp(&squared_distance(&self.pos[q], &self.pos[b]))
                .then(b.cmp(&a))
        }) else {
            return;
        };
        let r = self.pos.len();
        let mid = self.pos[q]
            .iter()
            .zip(&self.pos[f])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let common: Vec<usize> = self.edges[q].intersection(&self.edges[f]).copied().collect();
        self.pos.push(mid);
        self.edges.push(BTreeSet::new());
        self.disconnect(q, f);
        self.connect(r, q);
        self.connect(r, f);
        for c in common {
            self.connect(r, c);
        }
        self.error[q] *= 0.5;
        self.error[f] *= 0.5;
        self.error.push(0.5 * (self.error[q] + self.error[f]));
    }
}

/// Coarse-grains `centroids` into at most the configured number of nodes.
///
/// With `enabled == false` or fewer centroids than the budget the input is
/// returned unchanged (the latter sets `passthrough`).
pub fn gcs_reduce(centroids: &Matrix, cfg: &GcsConfig, enabled: bool, rng: &mut SeededRng) -> Result<GcsOutput> {
    cfg.validate()?;
    let m = centroids.rows();
    if m == 0 {
        return Err(Error::validation("no centroids to coarse-grain"));
    }
    let target = cfg.target_for(m);
    if !enabled || m <= target || m < 3 {
        return Ok(GcsOutput {
            nodes: centroids.clone(),
            passthrough: enabled && (m < target || m < 3),
            dead_removed: 0,
            relocated: 0,
            signals: 0,
        });
    }

    let start = rand::seq::index::sample(rng, m, 3);
    let mut net = Network {
        pos: start.iter().map(|i| centroids.row(i).to_vec()).collect(),
        error: vec![0.0; 3],
        edges: vec![BTreeSet::new(); 3],
    };
    net.connect(0, 1);
    net.connect(1, 2);
    net.connect(0, 2);

    let max_signals = cfg
        .max_signals
        .unwrap_or(50 * m)
        .max(cfg.insertion_interval * target);
    for t in 1..=max_signals {
        let x = centroids.row(rng.random_range(0..m));
        let s = net.nearest(x);
        net.error[s] += squared_distance(&net.pos[s], x);
        for (p, v) in net.pos[s].iter_mut().zip(x) {
            *p += cfg.winner_rate * (v - *p);
        }
        let neighbors: Vec<usize> = net.edges[s].iter().copied().collect();
        for c in neighbors {
            for (p, v) in net.pos[c].iter_mut().zip(x) {
                *p += cfg.neighbor_rate * (v - *p);
            }
        }
        if t % cfg.insertion_interval == 0 && net.pos.len() < target {
            net.insert();
        }
        net.error.iter_mut().for_each(|e| *e *= ERROR_DECAY);
    }

    let relocated = refine(&mut net.pos, centroids);
    let owners: Vec<usize> = centroids.iter_rows().map(|x| net.nearest(x)).collect();
    let mut owned = vec![false; net.pos.len()];
    for &o in &owners {
        owned[o] = true;
    }
    let alive: Vec<&[f64]> = net
        .pos
        .iter()
        .zip(&owned)
        .filter(|(_, &o)| o)
        .map(|(p, _)| p.as_slice())
        .collect();
    Ok(GcsOutput {
        dead_removed: net.pos.len() - alive.len(),
        relocated,
        nodes: Matrix::from_rows(&alive)?,
        passthrough: false,
        signals: max_signals,
    })
}

/// Batch refinement after growth: a node that owns no centroid is moved onto
/// the centroid farthest from its own nearest node, then every node moves to
/// the mean of the centroids it owns. Returns the number of relocations.
fn refine(pos: &mut [Vec<f64>], centroids: &Matrix) -> usize {
    let nearest = |pos: &[Vec<f64>], x: &[f64]| {
        pos.iter()
            .enumerate()
            .map(|(i, p)| (i, squared_distance(p, x)))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
    };
    let d = centroids.cols();
    let mut relocated = 0;
    for _ in 0..REFINE_ROUNDS {
        let owners: Vec<(usize, f64)> = centroids.iter_rows().map(|x| nearest(pos, x)).collect();
        let mut sums = vec![vec![0.0; d]; pos.len()];
        let mut counts = vec![0usize; pos.len()];
        for (x, &(o, _)) in centroids.iter_rows().zip(&owners) {
            counts[o] += 1;
            sums[o].iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        let mut changed = false;
        if let Some(dead) = counts.iter().position(|&c| c == 0) {
            let worst = owners
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |a, (i, &(_, e))| if e > a.1 { (i, e) } else { a });
            if worst.1 > 0.0 && relocated < pos.len() {
                pos[dead] = centroids.row(worst.0).to_vec();
                relocated += 1;
                continue;
            }
        }
        for ((p, s), &c) in pos.iter_mut().zip(&sums).zip(&counts) {
            if c == 0 {
                continue;
            }
            for (pv, sv) in p.iter_mut().zip(s) {
                let v = sv / c as f64;
                changed |= (*pv - v).abs() > 0.0;
                *pv = v;
            }
        }
        if !changed {
            break;
        }
    }
    relocated
}
