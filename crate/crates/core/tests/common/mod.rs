//! Property checks shared by the proptest suite and the acceptance runner.
//! Each check draws its own input from a case seed and returns a
//! description of the first violation.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use fedkhc::cardinality::{distance_matrix, threshold_components, NeighborRanks};
use fedkhc::federation::{run_clients, run_round, FederationConfig, PipelineConfig};
use fedkhc::merger::{merge_to_k, MergeConfig};
use fedkhc::metrics::{accuracy, ari, f_measure, nmi};
use fedkhc::surrogate::{summarize_members, BlockId, ClientUpload, SurrogateBlock};
use fedkhc::{Matrix, Partition, PointSet, SeededRng};
use rand::Rng;

pub type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Random points; about a third are snapped to a coarse lattice so that
/// distance ties and duplicates occur.
pub fn random_points(rng: &mut SeededRng, n: usize, d: usize) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let snap = rng.random_bool(0.3);
            (0..d)
                .map(|_| {
                    let v: f64 = rng.random();
                    if snap {
                        (v * 4.0).round() / 4.0
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `b` nearest other points of `i` by a full sort, ties by index.
fn knn(points: &Matrix, i: usize, b: usize) -> Vec<usize> {
    let mut others: Vec<(f64, usize)> = (0..points.rows())
        .filter(|&j| j != i)
        .map(|j| (dist(points.row(i), points.row(j)), j))
        .collect();
    others.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    others.into_iter().take(b).map(|(_, j)| j).collect()
}

pub fn snn_within_lnn(seed: u64) -> Check {
    let mut rng = SeededRng::new(seed, 11);
    let n = rng.random_range(3..40);
    let d = rng.random_range(1..4);
    let points = random_points(&mut rng, n, d);
    let ranks = NeighborRanks::new(&distance_matrix(&points));
    for b in 1..n {
        let lists: Vec<Vec<usize>> = (0..n).map(|i| knn(&points, i, b)).collect();
        let oracle: BTreeSet<(usize, usize)> = (0..n)
            .flat_map(|i| lists[i].iter().map(move |&j| (i, j)))
            .filter(|&(i, j)| i < j && lists[j].contains(&i))
            .collect();
        let lnn = ranks.lnn_pairs(b);
        ensure(lnn == oracle, || format!("case {seed}, b={b}: LNN differs from brute force"))?;
        let strict = ranks.strict_pairs(b);
        ensure(strict.is_subset(&lnn), || format!("case {seed}, b={b}: SNN not within LNN"))?;
        for &(i, j) in &strict {
            let ri = lists[i].iter().position(|&x| x == j);
            let rj = lists[j].iter().position(|&x| x == i);
            ensure(ri == rj, || format!("case {seed}, b={b}: pair ({i},{j}) has unequal ranks"))?;
        }
    }
    Ok(())
}

pub fn components_match_bfs(seed: u64) -> Check {
    let mut rng = SeededRng::new(seed, 12);
    let n = rng.random_range(1..=50);
    let points = random_points(&mut rng, n, 2);
    let radius: f64 = rng.random_range(0.0..0.4);
    let got = threshold_components(&distance_matrix(&points), radius);

    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if label[v] == usize::MAX && dist(points.row(u), points.row(v)) <= radius {
                    label[v] = next;
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    let count = got.iter().collect::<HashSet<_>>().len();
    ensure(count == next, || format!("case {seed}: {count} components, BFS finds {next}"))?;
    ensure(Partition::from_labels(&got) == Partition::from_labels(&label), || {
        format!("case {seed}: component membership differs from BFS")
    })
}

/// Blocks whose summaries are the exact statistics of their samples.
pub fn random_blocks(rng: &mut SeededRng, count: usize, scale: f64) -> Vec<SurrogateBlock> {
    (0..count)
        .map(|index| {
            let size = rng.random_range(2..20);
            let center = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let spread = rng.random_range(0.01..0.1);
            let rows: Vec<Vec<f64>> = (0..size)
                .map(|_| center.iter().map(|c| c + spread * rng.random_range(-1.0..1.0)).collect())
                .collect();
            blocks_from(&rows, index, scale)
        })
        .collect()
}

fn blocks_from(rows: &[Vec<f64>], index: usize, scale: f64) -> SurrogateBlock {
    let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
    let samples = Matrix::from_rows(&scaled).unwrap();
    let members: Vec<usize> = (0..samples.rows()).collect();
    let summary = summarize_members(&samples, &members, BlockId { client: index % 3, index });
    SurrogateBlock { summary, samples }
}

fn batch_stats(rows: &[&[f64]]) -> (Vec<f64>, f64, Vec<f64>) {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|a| rows.iter().map(|r| r[a]).sum::<f64>() / n).collect();
    let radius = rows.iter().map(|r| dist(r, &mean)).sum::<f64>() / n;
    let std = (0..d)
        .map(|a| {
            if rows.len() < 2 {
                0.0
            } else {
                (rows.iter().map(|r| (r[a] - mean[a]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            }
        })
        .collect();
    (mean, radius, std)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

pub fn merge_statistics_match_batch(seed: u64) -> Check {
    let mut rng = SeededRng::new(seed, 13);
    let count = rng.random_range(2..14);
    let blocks = random_blocks(&mut rng, count, 1.0);
    let k = rng.random_range(1..=blocks.len());
    let out = merge_to_k(&blocks, k, &MergeConfig::default()).map_err(|e| e.to_string())?;
    let total: usize = blocks.iter().map(|b| b.samples.rows()).sum();
    let pooled: usize = out.clusters.iter().map(|c| c.size).sum();
    ensure(pooled == total, || format!("case {seed}: {pooled} pooled samples, {total} uploaded"))?;
    ensure(out.clusters.len() == k, || format!("case {seed}: {} clusters, wanted {k}", out.clusters.len()))?;
    for (c, cluster) in out.clusters.iter().enumerate() {
        let rows: Vec<&[f64]> = blocks
            .iter()
            .filter(|b| out.assignment[&b.summary.id] == c)
            .flat_map(|b| b.samples.iter_rows())
            .collect();
        ensure(rows.len() == cluster.size, || format!("case {seed}: cluster {c} size mismatch"))?;
        let (mean, radius, std) = batch_stats(&rows);
        let ok = close(radius, cluster.radius)
            && mean.iter().zip(&cluster.centroid).all(|(a, b)| close(*a, *b))
            && std.iter().zip(&cluster.stddev).all(|(a, b)| close(*a, *b));
        ensure(ok, || format!("case {seed}: cluster {c} statistics differ from batch recomputation"))?;
    }
    Ok(())
}

pub fn merge_order_is_scale_free(seed: u64, gamma: f64) -> Check {
    let mut a_rng = SeededRng::new(seed, 14);
    let mut b_rng = SeededRng::new(seed, 14);
    let count = 2 + (seed % 12) as usize;
    let base = random_blocks(&mut a_rng, count, 1.0);
    let scaled = random_blocks(&mut b_rng, count, gamma);
    let cfg = MergeConfig::default();
    let x = merge_to_k(&base, 1, &cfg).map_err(|e| e.to_string())?;
    let y = merge_to_k(&scaled, 1, &cfg).map_err(|e| e.to_string())?;
    let pairs = |o: &fedkhc::merger::MergeOutcome| o.log.iter().map(|s| (s.kept, s.absorbed)).collect::<Vec<_>>();
    ensure(pairs(&x) == pairs(&y), || format!("case {seed}: merge order changes under scaling by {gamma}"))
}

fn rgs_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let max = prefix.iter().copied().max().map_or(0, |m| m + 1);
        for l in 0..=max {
            prefix.push(l);
            grow(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::new(), n, &mut out);
    out
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn counts(labels: &[usize]) -> HashMap<usize, f64> {
    let mut c = HashMap::new();
    for &l in labels {
        *c.entry(l).or_insert(0.0) += 1.0;
    }
    c
}

fn brute_ari(t: &[usize], p: &[usize]) -> f64 {
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..t.len() {
        for j in i + 1..t.len() {
            match (t[i] == t[j], p[i] == p[j]) {
                (true, true) => a += 1.0,
                (true, false) => b += 1.0,
                (false, true) => c += 1.0,
                (false, false) => d += 1.0,
            }
        }
    }
    let denom = (a + b) * (b + d) + (a + c) * (c + d);
    if denom == 0.0 {
        1.0
    } else {
        2.0 * (a * d - b * c) / denom
    }
}

fn brute_nmi(t: &[usize], p: &[usize]) -> f64 {
    let n = t.len() as f64;
    let h = |c: &HashMap<usize, f64>| c.values().map(|&x| -(x / n) * (x / n).ln()).sum::<f64>();
    let (ct, cp) = (counts(t), counts(p));
    let (ht, hp) = (h(&ct), h(&cp));
    if ht == 0.0 && hp == 0.0 {
        return 1.0;
    }
    if ht == 0.0 || hp == 0.0 {
        return 0.0;
    }
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    for (&a, &b) in t.iter().zip(p) {
        *joint.entry((a, b)).or_insert(0.0) += 1.0;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(a, b), &x)| (x / n) * ((x / n) / ((ct[&a] / n) * (cp[&b] / n))).ln())
        .sum();
    mi / (ht * hp).sqrt()
}

fn brute_accuracy(t: &[usize], p: &[usize]) -> f64 {
    let k = 1 + t.iter().chain(p).copied().max().unwrap_or(0);
    permutations(k)
        .iter()
        .map(|perm| t.iter().zip(p).filter(|(&a, &b)| perm[b] == a).count())
        .max()
        .unwrap() as f64
        / t.len() as f64
}

fn brute_f(t: &[usize], p: &[usize]) -> f64 {
    let n = t.len() as f64;
    let classes: BTreeSet<usize> = t.iter().copied().collect();
    let clusters: BTreeSet<usize> = p.iter().copied().collect();
    classes
        .iter()
        .map(|&c| {
            let in_class: HashSet<usize> = (0..t.len()).filter(|&i| t[i] == c).collect();
            let best = clusters
                .iter()
                .map(|&g| {
                    let in_cluster: HashSet<usize> = (0..p.len()).filter(|&i| p[i] == g).collect();
                    let both = in_class.intersection(&in_cluster).count() as f64;
                    if both == 0.0 {
                        return 0.0;
                    }
                    let (prec, rec) = (both / in_cluster.len() as f64, both / in_class.len() as f64);
                    2.0 * prec * rec / (prec + rec)
                })
                .fold(0.0, f64::max);
            in_class.len() as f64 / n * best
        })
        .sum()
}

pub fn metrics_match_oracles(t: &[usize], p: &[usize]) -> Check {
    let (pt, pp) = (Partition::from_labels(t), Partition::from_labels(p));
    let pairs = [
        ("ARI", ari(&pt, &pp).unwrap(), brute_ari(t, p)),
        ("NMI", nmi(&pt, &pp).unwrap(), brute_nmi(t, p)),
        ("accuracy", accuracy(&pt, &pp).unwrap(), brute_accuracy(t, p)),
        ("F-measure", f_measure(&pt, &pp).unwrap(), brute_f(t, p)),
    ];
    for (name, got, want) in pairs {
        ensure((got - want).abs() <= 1e-12, || format!("{name} {got} vs oracle {want} on {t:?} / {p:?}"))?;
    }
    Ok(())
}

/// Every pair of set partitions of `n` points.
pub fn metrics_exhaustive(n: usize) -> Check {
    let all = rgs_partitions(n);
    for t in &all {
        for p in &all {
            metrics_match_oracles(t, p)?;
        }
    }
    Ok(())
}

/// A labeled point set with a few loose blobs.
pub fn random_dataset(seed: u64) -> PointSet {
    let mut rng = SeededRng::new(seed, 15);
    let k = rng.random_range(2..5);
    let n = rng.random_range(30..120);
    let centers: Vec<[f64; 2]> = (0..k).map(|_| [rng.random(), rng.random()]).collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        rows.push(vec![
            centers[c][0] + rng.random_range(-0.05..0.05),
            centers[c][1] + rng.random_range(-0.05..0.05),
        ]);
        labels.push(c);
    }
    fedkhc::model::normalize_points(&Matrix::from_rows(&rows).unwrap(), Some(labels), "random").unwrap()
}

pub fn uploads_hold_no_raw_rows(seed: u64) -> Check {
    let data = random_dataset(seed);
    let mut rng = SeededRng::new(seed, 16);
    let fed = FederationConfig {
        num_clients: rng.random_range(1..5),
        seed,
        ..FederationConfig::default()
    };
    let phase = run_clients(&data, &fed, &PipelineConfig::default()).map_err(|e| e.to_string())?;
    let raw: HashSet<Vec<u64>> = data
        .points()
        .iter_rows()
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    for o in &phase.outcomes {
        let upload = ClientUpload::from_json(&o.message).map_err(|e| e.to_string())?;
        for b in &upload.blocks {
            for row in b.samples.iter_rows() {
                let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
                ensure(!raw.contains(&key), || format!("case {seed}: client {} uploaded a raw row", upload.client_id))?;
            }
        }
    }
    Ok(())
}

pub fn one_message_per_client(seed: u64) -> Check {
    let data = random_dataset(seed);
    let z = 1 + (seed % 4) as usize;
    let fed = FederationConfig {
        num_clients: z,
        seed,
        ..FederationConfig::default()
    };
    let out = run_round(&data, &fed, &PipelineConfig::default()).map_err(|e| e.to_string())?;
    ensure(out.messages.len() == z, || format!("case {seed}: {} messages for {z} clients", out.messages.len()))?;
    ensure(out.log.uploads_per_client == vec![1; z], || format!("case {seed}: uploads {:?}", out.log.uploads_per_client))?;
    let senders: BTreeSet<usize> = out
        .messages
        .iter()
        .map(|m| ClientUpload::from_json(m).map(|u| u.client_id))
        .collect::<fedkhc::Result<_>>()
        .map_err(|e| e.to_string())?;
    ensure(senders == (0..z).collect(), || format!("case {seed}: senders {senders:?}"))
}
