//! One-shot protocol: split data over simulated clients, run every client
//! pipeline concurrently, collect exactly one upload per client, run the
//! server pipeline and hand global labels back.
//!
//! Uploads and the server response always travel through their JSON wire
//! format, even in-process.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cardinality::{select_cluster_count, Estimate, GcsConfig, SncConfig};
use crate::merger::{merge_to_k, relabel_clients, MergeConfig, MergeReport, MergeStep};
use crate::model::{Matrix, Partition, PointSet, SeededRng, StreamRole};
use crate::partitioner::{partition, LocalPartition, PartitionerKind, Termination};
use crate::surrogate::{generate_surrogates, summarize, ClientUpload, SurrogateBlock, SurrogateConfig};
use crate::{Error, Result};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "FEDKHC_THREADS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Shuffle, then deal out contiguous chunks.
    #[default]
    Iid,
    /// Every client holds points from a fixed number of whole classes.
    ClustersPerClient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    pub num_clients: usize,
    pub split_mode: SplitMode,
    pub clusters_per_client: usize,
    pub seed: u64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            num_clients: 3,
            split_mode: SplitMode::Iid,
            clusters_per_client: 2,
            seed: 0,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::validation("num_clients must be >= 1"));
        }
        if self.split_mode == SplitMode::ClustersPerClient && self.clusters_per_client == 0 {
            return Err(Error::validation("clusters_per_client must be >= 1"));
        }
        Ok(())
    }
}

/// Everything the clients and the server run, apart from the split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub partitioner: PartitionerKind,
    pub surrogate: SurrogateConfig,
    pub cardinality: SncConfig,
    pub gcs: GcsConfig,
    pub merger: MergeConfig,
    /// Merge down to this many clusters instead of the estimated k*.
    pub fixed_k: Option<usize>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if let PartitionerKind::Snp(cfg) = &self.partitioner {
            cfg.validate()?;
        }
        self.cardinality.validate()?;
        self.gcs.validate()?;
        if self.fixed_k == Some(0) {
            return Err(Error::validation("fixed_k must be >= 1"));
        }
        self.merger.validate()
    }
}

/// One client's share: global row indices and the rows themselves.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientSlice {
    pub client_id: usize,
    pub indices: Vec<usize>,
    pub points: Matrix,
}

fn slices_from(data: &PointSet, groups: Vec<Vec<usize>>) -> Vec<ClientSlice> {
    groups
        .into_iter()
        .enumerate()
        .map(|(client_id, indices)| ClientSlice {
            client_id,
            points: data.points().select_rows(&indices),
            indices,
        })
        .collect()
}

/// Splits `items` into `parts` contiguous chunks whose sizes differ by at most one.
fn deal<T: Clone>(items: &[T], parts: usize) -> Vec<Vec<T>> {
    let base = items.len() / parts;
    let extra = items.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for z in 0..parts {
        let len = base + usize::from(z < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Random permutation dealt out in chunks of `floor(n/Z)` or `ceil(n/Z)`.
pub fn split_iid(data: &PointSet, num_clients: usize, rng: &mut SeededRng) -> Result<Vec<ClientSlice>> {
    let n = data.len();
    if num_clients == 0 || n < num_clients {
        return Err(Error::validation(format!(
            "cannot split {n} points over {num_clients} clients"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(slices_from(data, deal(&order, num_clients)))
}

/// Class ids held by every client: `clusters_per_client` consecutive entries
/// of a shuffled class list, dealt round-robin with wrap-around.
pub fn cluster_assignment(
    num_classes: usize,
    num_clients: usize,
    clusters_per_client: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<usize>>> {
    if clusters_per_client == 0 || clusters_per_client > num_classes {
        return Err(Error::validation(format!(
            "clusters_per_client must be in 1..={num_classes}, got {clusters_per_client}"
        )));
    }
    if clusters_per_client * num_clients < num_classes {
        return Err(Error::validation(format!(
            "{num_clients} clients x {clusters_per_client} clusters cannot cover {num_classes} clusters"
        )));
    }
    let mut classes: Vec<usize> = (0..num_classes).collect();
    classes.shuffle(rng);
    Ok((0..num_clients)
        .map(|z| {
            (0..clusters_per_client)
                .map(|j| classes[(z * clusters_per_client + j) % num_classes])
                .collect()
        })
        .collect())
}

/// Non-IID split: each client receives points of exactly
/// `clusters_per_client` classes. A class held by several clients is
/// shuffled and shared evenly among them.
pub fn split_by_cluster(
    data: &PointSet,
    num_clients: usize,
    clusters_per_client: usize,
    rng: &mut SeededRng,
) -> Result<Vec<ClientSlice>> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::validation("cluster-per-client split needs labels"))?;
    let k = data.num_classes().unwrap_or(0);
    let held = cluster_assignment(k, num_clients, clusters_per_client, rng)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
    for (class, members) in by_class.iter_mut().enumerate() {
        let holders: Vec<usize> = (0..num_clients).filter(|&z| held[z].contains(&class)).collect();
        members.shuffle(rng);
        for (z, chunk) in holders.iter().zip(deal(members, holders.len())) {
            groups[*z].extend(chunk);
        }
    }
    for (z, g) in groups.iter_mut().enumerate() {
        if g.is_empty() {
            return Err(Error::validation(format!("client {z} received no points")));
        }
        g.sort_unstable();
    }
    Ok(slices_from(data, groups))
}

pub fn split(data: &PointSet, cfg: &FederationConfig, rng: &mut SeededRng) -> Result<Vec<ClientSlice>> {
    cfg.validate()?;
    match cfg.split_mode {
        SplitMode::Iid => split_iid(data, cfg.num_clients, rng),
        SplitMode::ClustersPerClient => split_by_cluster(data, cfg.num_clients, cfg.clusters_per_client, rng),
    }
}

/// Worker pool shared by all rounds, sized by `FEDKHC_THREADS` when set.
pub fn thread_pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
            builder = builder.num_threads(n.max(1));
        }
        builder.build().expect("thread pool")
    })
}

/// Output of one client's local pipeline.
#[derive(Clone, Debug)]
pub struct ClientOutcome {
    pub partition: LocalPartition,
    /// The serialized upload, exactly as sent.
    pub message: String,
    pub seconds: f64,
}

/// Partitions, summarizes and serializes one client's upload.
pub fn run_client(slice: &ClientSlice, pipeline: &PipelineConfig, seed: u64) -> Result<ClientOutcome> {
    let start = Instant::now();
    let mut rng = SeededRng::for_role(seed, StreamRole::Client(slice.client_id));
    let part = partition(&slice.points, slice.client_id, &pipeline.partitioner, &mut rng)
        .map_err(|e| e.in_stage("partition"))?;
    part.check(slice.points.rows()).map_err(|e| e.in_stage("partition"))?;
    let summaries = summarize(&slice.points, &part);
    let upload = generate_surrogates(slice.client_id, &summaries, &slice.points, &pipeline.surrogate, &mut rng)
        .map_err(|e| e.in_stage("surrogate"))?;
    Ok(ClientOutcome {
        partition: part,
        message: upload.to_json(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Client phase of a round: the split and every client's upload.
#[derive(Clone, Debug)]
pub struct ClientPhase {
    pub slices: Vec<ClientSlice>,
    pub outcomes: Vec<ClientOutcome>,
    pub split_seconds: f64,
    pub client_seconds: f64,
}

pub fn run_clients(data: &PointSet, fed: &FederationConfig, pipeline: &PipelineConfig) -> Result<ClientPhase> {
    fed.validate()?;
    pipeline.validate()?;
    let start = Instant::now();
    let mut rng = SeededRng::for_role(fed.seed, StreamRole::Split);
    let slices = split(data, fed, &mut rng).map_err(|e| e.in_stage("split"))?;
    let split_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let outcomes: Vec<ClientOutcome> = thread_pool().install(|| {
        slices
            .par_iter()
            .map(|s| run_client(s, pipeline, fed.seed))
            .collect::<Result<_>>()
    })?;
    Ok(ClientPhase {
        slices,
        outcomes,
        split_seconds,
        client_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Server-side summary of the cluster-count estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerDiagnostics {
    pub num_blocks: usize,
    pub num_nodes: usize,
    pub gcs_passthrough: bool,
    pub gcs_dead_removed: usize,
    pub estimate: Estimate,
}

/// Decodes uploads and estimates `k*` from the uploaded centroids.
pub fn server_estimate(messages: &[String], pipeline: &PipelineConfig, seed: u64) -> Result<(Vec<SurrogateBlock>, ServerDiagnostics)> {
    let uploads: Vec<ClientUpload> = messages
        .iter()
        .map(|m| ClientUpload::from_json(m))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("upload"))?;
    let blocks: Vec<SurrogateBlock> = uploads.into_iter().flat_map(|u| u.blocks).collect();
    let centroids: Vec<&[f64]> = blocks.iter().map(|b| b.summary.centroid.as_slice()).collect();
    let centroids = Matrix::from_rows(&centroids).map_err(|e| e.in_stage("estimate"))?;
    let mut rng = SeededRng::for_role(seed, StreamRole::Server);
    let report = select_cluster_count(&centroids, &pipeline.cardinality, &pipeline.gcs, &mut rng)
        .map_err(|e| e.in_stage("estimate"))?;
    let diagnostics = ServerDiagnostics {
        num_blocks: blocks.len(),
        num_nodes: report.gcs.nodes.rows(),
        gcs_passthrough: report.gcs.passthrough,
        gcs_dead_removed: report.gcs.dead_removed,
        estimate: report.estimate,
    };
    Ok((blocks, diagnostics))
}

/// Communication and timing record of one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub uploads_per_client: Vec<usize>,
    pub bytes_per_client: Vec<usize>,
    pub response_bytes: usize,
    pub subclusters_per_client: Vec<usize>,
    pub terminations: Vec<Termination>,
    /// Seconds spent in each client's local pipeline.
    pub client_seconds: Vec<f64>,
    /// Seconds per phase: split, clients, estimate, merge, relabel, total.
    pub phases: BTreeMap<String, f64>,
}

/// Everything a round produces.
#[derive(Clone, Debug)]
pub struct RoundOutput {
    /// Global labels in original point order.
    pub partition: Partition,
    pub k_star: usize,
    pub log: RoundLog,
    pub server: ServerDiagnostics,
    pub merge_log: Vec<MergeStep>,
    pub report: MergeReport,
    /// Serialized uploads, one per client.
    pub messages: Vec<String>,
    pub slices: Vec<ClientSlice>,
}

/// Runs split, clients, the upload barrier, estimation, merging and relabeling.
pub fn run_round(data: &PointSet, fed: &FederationConfig, pipeline: &PipelineConfig) -> Result<RoundOutput> {
    let start = Instant::now();
    let phase = run_clients(data, fed, pipeline)?;
    let messages: Vec<String> = phase.outcomes.iter().map(|o| o.message.clone()).collect();

    let t = Instant::now();
    let (blocks, server) = server_estimate(&messages, pipeline, fed.seed)?;
    let estimate_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let k_star = pipeline.fixed_k.unwrap_or(server.estimate.k_star);
    let outcome = merge_to_k(&blocks, k_star, &pipeline.merger).map_err(|e| e.in_stage("merge"))?;
    let response = outcome.report().to_json();
    let merge_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let report = MergeReport::from_json(&response).map_err(|e| e.in_stage("relabel"))?;
    let assignment = report.assignment().map_err(|e| e.in_stage("relabel"))?;
    let parts: Vec<LocalPartition> = phase.outcomes.iter().map(|o| o.partition.clone()).collect();
    let local = relabel_clients(&parts, &assignment).map_err(|e| e.in_stage("relabel"))?;
    let mut labels = vec![usize::MAX; data.len()];
    for (slice, client_labels) in phase.slices.iter().zip(&local) {
        for (&i, &l) in slice.indices.iter().zip(client_labels) {
            labels[i] = l;
        }
    }
    if labels.contains(&usize::MAX) {
        return Err(Error::Internal("some points received no label".into()).in_stage("relabel"));
    }
    let partition = Partition::from_labels(&labels);
    let relabel_seconds = t.elapsed().as_secs_f64();

    let phases = BTreeMap::from([
        ("split".to_string(), phase.split_seconds),
        ("clients".to_string(), phase.client_seconds),
        ("estimate".to_string(), estimate_seconds),
        ("merge".to_string(), merge_seconds),
        ("relabel".to_string(), relabel_seconds),
        ("total".to_string(), start.elapsed().as_secs_f64()),
    ]);
    let log = RoundLog {
        uploads_per_client: vec![1; messages.len()],
        bytes_per_client: messages.iter().map(String::len).collect(),
        response_bytes: response.len(),
        subclusters_per_client: parts.iter().map(LocalPartition::len).collect(),
        terminations: parts.iter().map(|p| p.termination).collect(),
        client_seconds: phase.outcomes.iter().map(|o| o.seconds).collect(),
        phases,
    };
    Ok(RoundOutput {
        partition,
        k_star,
        log,
        server,
        merge_log: outcome.log,
        report,
        messages,
        slices: phase.slices,
    })
}
