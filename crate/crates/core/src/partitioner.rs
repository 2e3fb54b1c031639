//! Client-side micro-partitioning.
//!
//! The default strategy is a competitive-learning loop: every sample pulls its
//! nearest seed towards itself and pushes the nearest rival seed away, and new
//! seeds are inserted into subclusters whose density structure shows more
//! than one peak. The loop deliberately over-segments; the server merges the
//! pieces back together.
//!
//! A k-means over-segmentation ([`grid_partition`]) is provided as a drop-in
//! alternative.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::model::{euclidean, squared_distance, Matrix, SeededRng};
use crate::{Error, Result};

/// Density assigned to a point whose neighbors all coincide with it.
pub const DENSITY_CAP: f64 = 1e12;

/// Neighbor count used by [`local_density`]. Serialized as `"auto"` or an integer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DensityNeighbors {
    /// `ceil(sqrt(|C|))` for a subcluster `C`.
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DensityNeighborsRepr {
    Fixed(usize),
    Named(String),
}

impl Serialize for DensityNeighbors {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DensityNeighbors::Auto => DensityNeighborsRepr::Named("auto".into()).serialize(s),
            DensityNeighbors::Fixed(b) => DensityNeighborsRepr::Fixed(*b).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for DensityNeighbors {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match DensityNeighborsRepr::deserialize(d)? {
            DensityNeighborsRepr::Fixed(b) => Ok(DensityNeighbors::Fixed(b)),
            DensityNeighborsRepr::Named(s) if s == "auto" => Ok(DensityNeighbors::Auto),
            DensityNeighborsRepr::Named(s) => Err(serde::de::Error::custom(format!(
                "expected \"auto\" or a count, got {s:?}"
            ))),
        }
    }
}

impl DensityNeighbors {
    /// Neighbor count used for a subcluster of `size` points.
    pub fn resolve(self, size: usize) -> usize {
        let b = match self {
            DensityNeighbors::Auto => (size as f64).sqrt().ceil() as usize,
            DensityNeighbors::Fixed(b) => b,
        };
        b.clamp(1, size.saturating_sub(1).max(1))
    }
}

/// Parameters of the competitive-learning partitioner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnpConfig {
    pub initial_seeds: usize,
    /// Base winner learning rate; the effective rate decays with the winner's count.
    pub base_learning_rate: f64,
    /// Strength of the rival penalty.
    pub penalty_strength: f64,
    /// Stop once the largest per-epoch seed displacement falls below this.
    pub convergence_threshold: f64,
    pub max_epochs: usize,
    pub density_neighbors: DensityNeighbors,
    /// A subcluster is split only if its density gap exceeds this.
    pub seed_add_threshold: f64,
    /// Upper bound on seeds; `None` means `2 * ceil(sqrt(n))`.
    pub max_seeds: Option<usize>,
}

impl Default for SnpConfig {
    fn default() -> Self {
        Self {
            initial_seeds: 2,
            base_learning_rate: 0.05,
            penalty_strength: 0.1,
            convergence_threshold: 1e-4,
            max_epochs: 200,
            density_neighbors: DensityNeighbors::Auto,
            seed_add_threshold: 1.5,
            max_seeds: None,
        }
    }
}

impl SnpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_seeds < 2 {
            return Err(Error::validation("initial_seeds must be at least 2"));
        }
        if !(self.base_learning_rate > 0.0 && self.base_learning_rate <= 1.0) {
            return Err(Error::validation("base_learning_rate must be in (0, 1]"));
        }
        if !(self.penalty_strength >= 0.0) {
            return Err(Error::validation("penalty_strength must be nonnegative"));
        }
        if !(self.convergence_threshold > 0.0) || !(self.seed_add_threshold > 0.0) {
            return Err(Error::validation(
                "convergence_threshold and seed_add_threshold must be positive",
            ));
        }
        if let Some(m) = self.max_seeds {
            if m < self.initial_seeds {
                return Err(Error::validation("max_seeds must be >= initial_seeds"));
            }
        }
        if let DensityNeighbors::Fixed(0) = self.density_neighbors {
            return Err(Error::validation("density_neighbors must be >= 1"));
        }
        Ok(())
    }

    /// Seed cap for a client holding `n` points.
    pub fn max_seeds_for(&self, n: usize) -> usize {
        self.max_seeds
            .unwrap_or(2 * (n as f64).sqrt().ceil() as usize)
            .max(self.initial_seeds)
    }
}

/// Which local strategy a client runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "partitioner", rename_all = "lowercase")]
pub enum PartitionerKind {
    Snp(SnpConfig),
    Grid { target_count: usize },
}

impl Default for PartitionerKind {
    fn default() -> Self {
        PartitionerKind::Snp(SnpConfig::default())
    }
}

/// How a partitioning run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Largest seed displacement dropped below the convergence threshold.
    Converged,
    /// `max_epochs` ran out first.
    EpochLimit,
    /// Fewer points than initial seeds: every point became its own subcluster.
    TooFewPoints,
    /// Non-iterative strategy.
    Direct,
}

/// Disjoint, non-empty subclusters covering a client's local indices.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalPartition {
    pub client_id: usize,
    pub subclusters: Vec<Vec<usize>>,
    pub termination: Termination,
    /// Largest seed displacement of every epoch, in order.
    pub displacements: Vec<f64>,
    pub seeds_added: usize,
}

impl LocalPartition {
    /// Checks coverage of `0..n`, disjointness and non-emptiness.
    pub fn check(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for (g, members) in self.subclusters.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::Internal(format!("subcluster {g} is empty")));
            }
            for &i in members {
                if i >= n || seen[i] {
                    return Err(Error::Internal(format!(
                        "index {i} is out of range or assigned twice"
                    )));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Internal(format!("index {i} is not covered")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.subclusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subclusters.is_empty()
    }

    fn singletons(client_id: usize, n: usize, termination: Termination) -> Self {
        Self {
            client_id,
            subclusters: (0..n).map(|i| vec![i]).collect(),
            termination,
            displacements: Vec::new(),
            seeds_added: 0,
        }
    }
}

/// Runs the configured strategy.
pub fn partition(
    points: &Matrix,
    client_id: usize,
    kind: &PartitionerKind,
    rng: &mut SeededRng,
) -> Result<LocalPartition> {
    match kind {
        PartitionerKind::Snp(cfg) => snp_partition(points, client_id, cfg, rng),
        PartitionerKind::Grid { target_count } => grid_partition(points, client_id, *target_count),
    }
}

/// `rho_i = b / sum of distances to the b nearest members`, larger is denser.
///
/// `members` indexes rows of `points`; the result is parallel to `members`.
pub fn local_density(points: &Matrix, members: &[usize], neighbors: usize) -> Vec<f64> {
    let m = members.len();
    if m < 2 {
        return vec![1.0; m];
    }
    let b = neighbors.clamp(1, m - 1);
    let mut row = Vec::with_capacity(m - 1);
    members
        .iter()
        .map(|&i| {
            row.clear();
            row.extend(
                members
                    .iter()
                    .filter(|&&q| q != i)
                    .map(|&q| euclidean(points.row(i), points.row(q))),
            );
            row.select_nth_unstable_by(b - 1, f64::total_cmp);
            let total: f64 = row[..b].iter().sum();
            if total > 0.0 {
                (b as f64 / total).min(DENSITY_CAP)
            } else {
                DENSITY_CAP
            }
        })
        .collect()
}

/// Density gap of a subcluster together with the point at which a new seed
/// would be inserted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapInfo {
    pub gap: f64,
    /// Row index (into the point matrix) of the insertion point.
    pub split_point: usize,
}

/// Largest distance from any member to its nearest denser member, relative to
/// the mean pairwise distance. The densest member contributes its largest
/// in-subcluster distance. Equal densities are ordered by position in
/// `members`, earlier being denser.
pub fn density_gap(points: &Matrix, members: &[usize], density: &[f64]) -> f64 {
    gap_info(points, members, density).gap
}

pub(crate) fn gap_info(points: &Matrix, members: &[usize], density: &[f64]) -> GapInfo {
    let m = members.len();
    assert_eq!(m, density.len());
    if m < 2 {
        return GapInfo {
            gap: 0.0,
            split_point: members.first().copied().unwrap_or(0),
        };
    }
    let mut total = 0.0;
    for a in 0..m {
        for b in a + 1..m {
            total += euclidean(points.row(members[a]), points.row(members[b]));
        }
    }
    let mean_pair = total / (m * (m - 1) / 2) as f64;
    if mean_pair <= 0.0 {
        return GapInfo {
            gap: 0.0,
            split_point: members[0],
        };
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| density[b].total_cmp(&density[a]).then(a.cmp(&b)));

    let peak = order[0];
    let (mut far, mut far_dist) = (peak, 0.0);
    for q in 0..m {
        let dist = euclidean(points.row(members[peak]), points.row(members[q]));
        if dist > far_dist {
            far = q;
            far_dist = dist;
        }
    }
    let (mut best, mut best_gap) = (peak, far_dist);
    for rank in 1..m {
        let i = order[rank];
        let nearest_denser = order[..rank]
            .iter()
            .map(|&q| squared_distance(points.row(members[i]), points.row(members[q])))
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        if nearest_denser > best_gap {
            best = i;
            best_gap = nearest_denser;
        }
    }
    // The peak is already represented by the current seed; split towards its
    // farthest member instead.
    let split = if best == peak { far } else { best };
    GapInfo {
        gap: best_gap / mean_pair,
        split_point: members[split],
    }
}

fn nearest_two(seeds: &[Vec<f64>], x: &[f64]) -> (usize, Option<usize>) {
    let mut first = (0, f64::INFINITY);
    let mut second: (Option<usize>, f64) = (None, f64::INFINITY);
    for (j, s) in seeds.iter().enumerate() {
        let d = squared_distance(s, x);
        if d < first.1 {
            second = (Some(first.0), first.1);
            first = (j, d);
        } else if d < second.1 {
            second = (Some(j), d);
        }
    }
    if seeds.len() < 2 {
        second.0 = None;
    }
    (first.0, second.0)
}

fn assign_nearest(points: &Matrix, seeds: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); seeds.len()];
    for (i, x) in points.iter_rows().enumerate() {
        groups[nearest_two(seeds, x).0].push(i);
    }
    groups
}

fn mean_pairwise_seed_distance(seeds: &[Vec<f64>]) -> f64 {
    let k = seeds.len();
    if k < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for a in 0..k {
        for b in a + 1..k {
            total += euclidean(&seeds[a], &seeds[b]);
        }
    }
    total / (k * (k - 1) / 2) as f64
}

/// Competitive-learning micro-partitioning of one client's points.
pub fn snp_partition(
    points: &Matrix,
    client_id: usize,
    cfg: &SnpConfig,
    rng: &mut SeededRng,
) -> Result<LocalPartition> {
    cfg.validate()?;
    let n = points.rows();
    if n < cfg.initial_seeds {
        return Ok(LocalPartition::singletons(client_id, n, Termination::TooFewPoints));
    }
    let max_seeds = cfg.max_seeds_for(n);
    let mut seeds: Vec<Vec<f64>> = rand::seq::index::sample(rng, n, cfg.initial_seeds)
        .into_iter()
        .map(|i| points.row(i).to_vec())
        .collect();
    let mut wins = vec![0usize; seeds.len()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut displacements = Vec::new();
    let mut seeds_added = 0;
    let mut termination = Termination::EpochLimit;

    for _epoch in 0..cfg.max_epochs {
        let start = seeds.clone();
        let spread = mean_pairwise_seed_distance(&seeds);
        order.shuffle(rng);
        for &i in &order {
            let x = points.row(i);
            let (winner, rival) = nearest_two(&seeds, x);
            wins[winner] += 1;
            let rate = cfg.base_learning_rate / (1.0 + wins[winner] as f64 / 10.0);
            let pull: Vec<f64> = x.iter().zip(&seeds[winner]).map(|(a, b)| a - b).collect();
            for (m, p) in seeds[winner].iter_mut().zip(&pull) {
                *m += rate * p;
            }
            if let Some(rival) = rival {
                let penalty = if spread > 0.0 {
                    (-euclidean(&seeds[rival], &seeds[winner]) / spread).exp()
                } else {
                    1.0
                };
                let step = cfg.penalty_strength * penalty * rate;
                for (m, p) in seeds[rival].iter_mut().zip(&pull) {
                    *m -= step * p;
                }
            }
        }
        let moved = start
            .iter()
            .zip(&seeds)
            .map(|(a, b)| euclidean(a, b))
            .fold(0.0, f64::max);
        displacements.push(moved);

        let mut groups = assign_nearest(points, &seeds);
        if groups.iter().any(Vec::is_empty) {
            let kept: Vec<(Vec<f64>, usize)> = seeds
                .drain(..)
                .zip(wins.drain(..))
                .zip(&groups)
                .filter(|(_, g)| !g.is_empty())
                .map(|(sw, _)| sw)
                .collect();
            (seeds, wins) = kept.into_iter().unzip();
            groups.retain(|g| !g.is_empty());
        }

        if moved < 10.0 * cfg.convergence_threshold && seeds.len() < max_seeds {
            if let Some(split) = choose_split(points, &groups, &wins, cfg) {
                seeds.push(points.row(split).to_vec());
                wins.push(0);
                seeds_added += 1;
                continue;
            }
        }
        if moved < cfg.convergence_threshold {
            termination = Termination::Converged;
            break;
        }
    }

    // Seeds can still move in the final epoch; make the result consistent.
    let mut groups = assign_nearest(points, &seeds);
    groups.retain(|g| !g.is_empty());
    let out = LocalPartition {
        client_id,
        subclusters: groups,
        termination,
        displacements,
        seeds_added,
    };
    debug_assert!(out.check(n).is_ok());
    Ok(out)
}

/// Among subclusters whose gap exceeds the threshold, the one maximizing
/// `wins * gap`; returns its insertion point.
fn choose_split(
    points: &Matrix,
    groups: &[Vec<usize>],
    wins: &[usize],
    cfg: &SnpConfig,
) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (j, members) in groups.iter().enumerate() {
        if members.len() < 3 {
            continue;
        }
        let b = cfg.density_neighbors.resolve(members.len());
        let density = local_density(points, members, b);
        let info = gap_info(points, members, &density);
        if info.gap <= cfg.seed_add_threshold {
            continue;
        }
        let score = wins[j].max(1) as f64 * info.gap;
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, info.split_point));
        }
    }
    best.map(|(_, p)| p)
}

/// k-means over-segmentation into at most `target_count` subclusters.
///
/// Centers start from a deterministic farthest-point traversal beginning at
/// the point closest to the data mean.
pub fn grid_partition(points: &Matrix, client_id: usize, target_count: usize) -> Result<LocalPartition> {
    if target_count == 0 {
        return Err(Error::validation("target_count must be >= 1"));
    }
    let n = points.rows();
    if n == 0 {
        return Err(Error::validation("cannot partition an empty slice"));
    }
    let k = target_count.min(n);
    if k == n {
        return Ok(LocalPartition::singletons(client_id, n, Termination::Direct));
    }
    let d = points.cols();
    let mut mean = vec![0.0; d];
    for x in points.iter_rows() {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n as f64;
        }
    }
    let first = (0..n)
        .min_by(|&a, &b| {
            squared_distance(points.row(a), &mean).total_cmp(&squared_distance(points.row(b), &mean))
        })
        .unwrap_or(0);
    let mut centers = vec![points.row(first).to_vec()];
    let mut nearest: Vec<f64> = points
        .iter_rows()
        .map(|x| squared_distance(x, &centers[0]))
        .collect();
    while centers.len() < k {
        let (far, dist) = nearest
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        if dist <= 0.0 {
            break;
        }
        centers.push(points.row(far).to_vec());
        let c = centers.last().expect("just pushed");
        for (i, x) in points.iter_rows().enumerate() {
            nearest[i] = nearest[i].min(squared_distance(x, c));
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, x) in points.iter_rows().enumerate() {
            let best = nearest_two(&centers, x).0;
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (i, x) in points.iter_rows().enumerate() {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i]].iter_mut().zip(x) {
                *s += v;
            }
        }
        for (c, (s, &cnt)) in centers.iter_mut().zip(sums.iter().zip(&counts)) {
            if cnt > 0 {
                for (cv, sv) in c.iter_mut().zip(s) {
                    *cv = sv / cnt as f64;
                }
            }
        }
    }
    let mut groups = vec![Vec::new(); centers.len()];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups.retain(|g| !g.is_empty());
    Ok(LocalPartition {
        client_id,
        subclusters: groups,
        termination: Termination::Direct,
        displacements: Vec::new(),
        seeds_added: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{builtin_specs, generate};
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn line(xs: &[f64]) -> Matrix {
        Matrix::from_flat(xs.len(), 1, xs.to_vec()).unwrap()
    }

    fn blobs(centers: &[[f64; 2]], per: usize, sd: f64, seed: u64) -> Matrix {
        let mut rng = SeededRng::new(seed, 9);
        let noise = Normal::new(0.0, sd).unwrap();
        let mut rows = Vec::new();
        for c in centers {
            for _ in 0..per {
                rows.push(vec![c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)]);
            }
        }
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn two_blobs_get_one_seed_each() {
        let points = blobs(&[[0.0, 0.0], [10.0, 10.0]], 50, 0.5, 1);
        let cfg = SnpConfig {
            seed_add_threshold: 1e6,
            ..SnpConfig::default()
        };
        for seed in 0..5 {
            let out = snp_partition(&points, 0, &cfg, &mut SeededRng::new(seed, 1)).unwrap();
            assert_eq!(out.len(), 2, "seed {seed}");
            for g in &out.subclusters {
                let first = g[0] < 50;
                assert!(g.iter().all(|&i| (i < 50) == first), "seed {seed}: mixed subcluster");
            }
        }
    }

    #[test]
    fn repeated_point_collapses_to_one_subcluster() {
        let points = Matrix::from_rows(&vec![vec![0.3, 0.7]; 10]).unwrap();
        let out = snp_partition(&points, 0, &SnpConfig::default(), &mut SeededRng::new(0, 1)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.subclusters[0].len(), 10);
    }

    #[test]
    fn too_few_points_become_singletons() {
        let out = snp_partition(&line(&[0.5]), 3, &SnpConfig::default(), &mut SeededRng::new(0, 1)).unwrap();
        assert_eq!(out.termination, Termination::TooFewPoints);
        assert_eq!(out.subclusters, vec![vec![0]]);
        assert_eq!(out.client_id, 3);
    }

    #[test]
    fn density_by_hand() {
        let p = line(&[0.0, 1.0, 2.0, 10.0]);
        let rho = local_density(&p, &[0, 1, 2, 3], 1);
        assert_eq!(rho, vec![1.0, 1.0, 1.0, 0.125]);
    }

    #[test]
    fn interior_points_are_denser_than_endpoints() {
        let p = line(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let rho = local_density(&p, &[0, 1, 2, 3, 4], 2);
        for interior in 1..4 {
            assert!(rho[interior] > rho[0] && rho[interior] > rho[4]);
        }
    }

    #[test]
    fn coincident_points_hit_the_cap() {
        let p = line(&[0.2, 0.2]);
        assert_eq!(local_density(&p, &[0, 1], 1), vec![DENSITY_CAP; 2]);
    }

    #[test]
    fn gap_of_a_pair_is_one() {
        let p = line(&[0.0, 1.0]);
        let rho = local_density(&p, &[0, 1], 1);
        assert_eq!(density_gap(&p, &[0, 1], &rho), 1.0);
    }

    #[test]
    fn gap_of_coincident_points_is_zero() {
        let p = line(&[0.4, 0.4, 0.4]);
        let rho = local_density(&p, &[0, 1, 2], 1);
        assert_eq!(density_gap(&p, &[0, 1, 2], &rho), 0.0);
    }

    #[test]
    fn separated_sub_blobs_exceed_the_threshold() {
        // Two lattices with spacing 0.1, ten spacings apart.
        let mut rows = Vec::new();
        for offset in [0.0, 1.0] {
            for i in 0..4 {
                for j in 0..4 {
                    rows.push(vec![offset + 0.1 * i as f64 / 3.0, 0.1 * j as f64 / 3.0]);
                }
            }
        }
        let p = Matrix::from_rows(&rows).unwrap();
        let members: Vec<usize> = (0..rows.len()).collect();
        let rho = local_density(&p, &members, 4);
        let gap = density_gap(&p, &members, &rho);
        assert!(gap > SnpConfig::default().seed_add_threshold, "gap {gap}");

        let one: Vec<usize> = (0..16).collect();
        let rho = local_density(&p, &one, 4);
        assert!(density_gap(&p, &one, &rho) < gap);
    }

    #[test]
    fn ids2_on_one_client_over_segments_purely() {
        let data = generate(&builtin_specs()["ids2"], &mut SeededRng::new(0, 3)).unwrap();
        let labels = data.labels().unwrap();
        let out = snp_partition(data.points(), 0, &SnpConfig::default(), &mut SeededRng::new(0, 1)).unwrap();
        out.check(data.len()).unwrap();
        assert!(out.len() > 5);
        for g in &out.subclusters {
            let mut counts = [0usize; 5];
            for &i in g {
                counts[labels[i]] += 1;
            }
            let purity = *counts.iter().max().unwrap() as f64 / g.len() as f64;
            assert!(purity >= 0.95, "purity {purity} over {counts:?}");
        }
    }

    #[test]
    fn grid_extremes() {
        let p = line(&[0.0, 0.1, 0.5, 0.9]);
        let all = grid_partition(&p, 0, 4).unwrap();
        assert_eq!(all.len(), 4);
        assert!(all.subclusters.iter().all(|g| g.len() == 1));
        assert_eq!(grid_partition(&p, 0, 10).unwrap().len(), 4);
        let one = grid_partition(&p, 0, 1).unwrap();
        assert_eq!(one.subclusters, vec![vec![0, 1, 2, 3]]);
        assert!(grid_partition(&p, 0, 0).is_err());
    }

    fn max_radius(points: &Matrix, members: &[usize]) -> f64 {
        let d = points.cols();
        let mut c = vec![0.0; d];
        for &i in members {
            for (cv, v) in c.iter_mut().zip(points.row(i)) {
                *cv += v / members.len() as f64;
            }
        }
        members
            .iter()
            .map(|&i| euclidean(points.row(i), &c))
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_on_gaussian_slice_is_finer_than_every_cluster() {
        let data = generate(&builtin_specs()["gaussian"], &mut SeededRng::new(2, 3)).unwrap();
        let gt = data.ground_truth().unwrap();
        let mut clusters = vec![Vec::new(); gt.k()];
        for (i, &c) in gt.assignment().iter().enumerate() {
            clusters[c].push(i);
        }
        let smallest = clusters
            .iter()
            .map(|m| max_radius(data.points(), m))
            .fold(f64::INFINITY, f64::min);
        // One client's worth of an IID split.
        let slice: Vec<usize> = (0..data.len()).step_by(10).collect();
        let points = data.points().select_rows(&slice);
        let out = grid_partition(&points, 0, 40).unwrap();
        out.check(points.rows()).unwrap();
        assert_eq!(out.len(), 40);
        for g in &out.subclusters {
            let r = max_radius(&points, g);
            assert!(r < smallest, "radius {r} vs {smallest}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn snp_covers_disjointly_and_respects_seed_cap(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 2..60),
            seed in 0u64..1000,
        ) {
            let p = Matrix::from_rows(&rows).unwrap();
            let cfg = SnpConfig { max_epochs: 40, ..SnpConfig::default() };
            let a = snp_partition(&p, 0, &cfg, &mut SeededRng::new(seed, 1)).unwrap();
            prop_assert!(a.check(rows.len()).is_ok());
            prop_assert!(a.len() <= cfg.max_seeds_for(rows.len()));
            prop_assert!(a.displacements.len() <= cfg.max_epochs);
            let b = snp_partition(&p, 0, &cfg, &mut SeededRng::new(seed, 1)).unwrap();
            prop_assert_eq!(a.subclusters, b.subclusters);
        }

        #[test]
        fn grid_covers_disjointly(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..50),
            target in 1usize..20,
        ) {
            let p = Matrix::from_rows(&rows).unwrap();
            let out = grid_partition(&p, 0, target).unwrap();
            prop_assert!(out.check(rows.len()).is_ok());
            prop_assert!(out.len() <= target.min(rows.len()));
        }
    }
}
