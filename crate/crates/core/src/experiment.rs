//! Config-driven experiments: repeated rounds, parameter sweeps, timing
//! benchmarks and offline evaluation, written as JSON and CSV reports.
//!
//! A config is a TOML document:
//!
//! ```toml
//! dataset = "ids2_non_iid"      # builtin name or CSV path
//! seeds = [0, 1, 2]
//! output_dir = "results/ids2_non_iid"
//!
//! [federation]
//! num_clients = 3
//!
//! [pipeline.cardinality]
//! percentile = 27.5
//! ```
//!
//! Every field has a default, so an empty document runs ids2 over ten seeds.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{self, Builtin};
use crate::federation::{
    run_clients, run_round, server_estimate, thread_pool, FederationConfig, PipelineConfig, RoundLog,
    SplitMode,
};
use crate::metrics::{MetricReport, MetricSummary};
use crate::model::{normalize_points, read_csv_path, write_csv, PointSet, SeededRng, StreamRole};
use crate::{Error, Partition, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Builtin dataset name, or a path to a CSV file.
    pub dataset: String,
    pub seeds: Vec<u64>,
    /// When set, must equal the number of seeds; with no seeds it picks `0..repeats`.
    pub repeats: Option<usize>,
    pub output_dir: PathBuf,
    pub federation: FederationConfig,
    pub pipeline: PipelineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: "ids2".into(),
            seeds: (0..10).collect(),
            repeats: None,
            output_dir: PathBuf::from("results"),
            federation: FederationConfig::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolved()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Reconciles `repeats` with `seeds` and validates every sub-config.
    pub fn resolved(mut self) -> Result<Self> {
        match self.repeats {
            Some(r) if self.seeds.is_empty() => self.seeds = (0..r as u64).collect(),
            Some(r) if r != self.seeds.len() => {
                return Err(Error::validation(format!(
                    "repeats = {r} but {} seeds are listed",
                    self.seeds.len()
                )))
            }
            _ => {}
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("no seeds to run"));
        }
        self.repeats = Some(self.seeds.len());
        self.federation.validate()?;
        self.pipeline.validate()?;
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Federation settings of the run with `seed`; builtin non-IID names force
    /// the cluster-per-client split.
    pub fn federation_for(&self, source: &DatasetSource, seed: u64) -> FederationConfig {
        let mut fed = self.federation.clone();
        fed.seed = seed;
        if let DatasetSource::Builtin(b) = source {
            if b.non_iid {
                fed.split_mode = SplitMode::ClustersPerClient;
            }
        }
        fed
    }
}

/// Where a config's points come from.
#[derive(Clone, Debug)]
pub enum DatasetSource {
    /// Regenerated for every seed.
    Builtin(Builtin),
    /// Fixed table; only the split changes with the seed.
    Table(PointSet),
}

impl DatasetSource {
    pub fn resolve(dataset: &str) -> Result<Self> {
        let path = Path::new(dataset);
        if dataset.ends_with(".csv") || path.is_file() {
            let raw = read_csv_path(path)?;
            let points = normalize_points(&raw.features, raw.labels, dataset)?;
            return Ok(DatasetSource::Table(points));
        }
        datagen::lookup(dataset).map(DatasetSource::Builtin)
    }

    pub fn points_for(&self, seed: u64) -> Result<PointSet> {
        match self {
            DatasetSource::Builtin(b) => {
                let data = datagen::generate(&b.spec, &mut SeededRng::for_role(seed, StreamRole::Data))?;
                Ok(data.with_dataset_id(b.name.clone()))
            }
            DatasetSource::Table(p) => Ok(p.clone()),
        }
    }
}

/// Writes the builtin dataset `name` drawn with `seed` as CSV.
pub fn generate_data<W: std::io::Write>(name: &str, seed: u64, out: W) -> Result<PointSet> {
    let b = datagen::lookup(name)?;
    let data = datagen::generate(&b.spec, &mut SeededRng::for_role(seed, StreamRole::Data))?;
    write_csv(out, data.points(), data.labels())?;
    Ok(data)
}

/// One completed round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub k_star: usize,
    pub true_k: Option<usize>,
    pub metrics: Option<MetricReport>,
    pub num_blocks: usize,
    pub num_nodes: usize,
    pub b_optimal: usize,
    pub b_fallback: bool,
    pub log: RoundLog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub failures: Vec<SeedFailure>,
    /// Present when the dataset has labels and at least one run finished.
    pub summary: Option<MetricSummary>,
}

fn run_seed(cfg: &ExperimentConfig, source: &DatasetSource, seed: u64) -> Result<RunRecord> {
    let data = source.points_for(seed)?;
    let fed = cfg.federation_for(source, seed);
    let out = run_round(&data, &fed, &cfg.pipeline)?;
    let metrics = data
        .ground_truth()
        .map(|truth| MetricReport::compute(&truth, &out.partition))
        .transpose()?;
    Ok(RunRecord {
        seed,
        k_star: out.k_star,
        true_k: data.num_classes(),
        metrics,
        num_blocks: out.server.num_blocks,
        num_nodes: out.server.num_nodes,
        b_optimal: out.server.estimate.graph.b_optimal,
        b_fallback: out.server.estimate.graph.b_fallback,
        log: out.log,
    })
}

fn split_results<T>(seeds: &[u64], results: Vec<Result<T>>) -> (Vec<T>, Vec<SeedFailure>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (&seed, r) in seeds.iter().zip(results) {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failed.push(SeedFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    (ok, failed)
}

/// One round per seed, seeds in parallel. Per-seed failures are collected,
/// not raised.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let cfg = cfg.clone().resolved()?;
    let source = DatasetSource::resolve(&cfg.dataset)?;
    let results: Vec<Result<RunRecord>> =
        thread_pool().install(|| cfg.seeds.par_iter().map(|&s| run_seed(&cfg, &source, s)).collect());
    let (runs, failures) = split_results(&cfg.seeds, results);
    let metrics: Vec<MetricReport> = runs.iter().filter_map(|r| r.metrics).collect();
    let summary = (!metrics.is_empty()).then(|| MetricSummary::aggregate(&metrics));
    Ok(RunReport {
        config: cfg,
        runs,
        failures,
        summary,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn metric_fields(m: Option<&MetricReport>) -> Vec<String> {
    match m {
        Some(m) => m.values().iter().map(|v| format!("{v:.6}")).collect(),
        None => vec![String::new(); 5],
    }
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))
}

impl RunReport {
    /// Writes `report.json`, `runs.csv`, `summary.csv` and the resolved `config.toml`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        write_config(dir, &self.config)?;
        write_json(&dir.join("report.json"), self)?;

        let path = dir.join("runs.csv");
        let mut w = csv_writer(&path)?;
        let mut header = vec!["seed", "k_star", "true_k"];
        header.extend(MetricReport::NAMES);
        header.extend(["blocks", "nodes", "b_optimal", "b_fallback", "total_seconds"]);
        w.write_record(&header)?;
        for r in &self.runs {
            let mut rec = vec![r.seed.to_string(), r.k_star.to_string(), r.true_k.map_or(String::new(), |k| k.to_string())];
            rec.extend(metric_fields(r.metrics.as_ref()));
            rec.extend([
                r.num_blocks.to_string(),
                r.num_nodes.to_string(),
                r.b_optimal.to_string(),
                r.b_fallback.to_string(),
                format!("{:.6}", r.log.phases.get("total").copied().unwrap_or(0.0)),
            ]);
            w.write_record(&rec)?;
        }
        finish(w, &path)?;

        if let Some(s) = &self.summary {
            let path = dir.join("summary.csv");
            let mut w = csv_writer(&path)?;
            w.write_record(["metric", "mean", "std", "formatted"])?;
            for (name, col) in MetricReport::NAMES.iter().zip(s.columns()) {
                w.write_record([name.to_string(), format!("{:.6}", col.mean), format!("{:.6}", col.std), col.to_string()])?;
            }
            finish(w, &path)?;
        }
        Ok(())
    }

    pub fn k_hits(&self) -> usize {
        self.runs.iter().filter(|r| Some(r.k_star) == r.true_k).count()
    }
}

/// Parameter varied by [`sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    /// Short-distance percentile; estimate only, no merge.
    T,
    /// Similarity exponent of the special distance; full rounds.
    Beta,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t" => Ok(SweepParam::T),
            "beta" => Ok(SweepParam::Beta),
            other => Err(Error::validation(format!("unknown sweep parameter {other:?}; use t or beta"))),
        }
    }
}

impl SweepParam {
    /// The grids used when none is given.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepParam::T => (0..9).map(|i| 20.0 + 2.5 * i as f64).collect(),
            SweepParam::Beta => vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub value: f64,
    pub k_star: usize,
    pub true_k: Option<usize>,
    pub b_optimal: usize,
    pub b_fallback: bool,
    /// Only for full rounds on labeled data.
    pub metrics: Option<MetricReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub param: SweepParam,
    pub grid: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SeedFailure>,
}

fn sweep_seed(cfg: &ExperimentConfig, source: &DatasetSource, param: SweepParam, grid: &[f64], seed: u64) -> Result<Vec<SweepRow>> {
    let data = source.points_for(seed)?;
    let fed = cfg.federation_for(source, seed);
    let true_k = data.num_classes();
    match param {
        SweepParam::T => {
            let phase = run_clients(&data, &fed, &cfg.pipeline)?;
            let messages: Vec<String> = phase.outcomes.into_iter().map(|o| o.message).collect();
            grid.iter()
                .map(|&t| {
                    let mut pipeline = cfg.pipeline.clone();
                    pipeline.cardinality.percentile = t;
                    pipeline.validate()?;
                    let (_, diag) = server_estimate(&messages, &pipeline, seed)?;
                    Ok(SweepRow {
                        seed,
                        value: t,
                        k_star: diag.estimate.k_star,
                        true_k,
                        b_optimal: diag.estimate.graph.b_optimal,
                        b_fallback: diag.estimate.graph.b_fallback,
                        metrics: None,
                    })
                })
                .collect()
        }
        SweepParam::Beta => grid
            .iter()
            .map(|&beta| {
                let mut pipeline = cfg.pipeline.clone();
                pipeline.merger.beta = beta;
                pipeline.validate()?;
                let out = run_round(&data, &fed, &pipeline)?;
                let metrics = data
                    .ground_truth()
                    .map(|truth| MetricReport::compute(&truth, &out.partition))
                    .transpose()?;
                Ok(SweepRow {
                    seed,
                    value: beta,
                    k_star: out.k_star,
                    true_k,
                    b_optimal: out.server.estimate.graph.b_optimal,
                    b_fallback: out.server.estimate.graph.b_fallback,
                    metrics,
                })
            })
            .collect(),
    }
}

/// Runs every grid value for every seed.
pub fn sweep(cfg: &ExperimentConfig, param: SweepParam, grid: &[f64]) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(Error::validation("sweep grid is empty"));
    }
    let cfg = cfg.clone().resolved()?;
    let source = DatasetSource::resolve(&cfg.dataset)?;
    let results: Vec<Result<Vec<SweepRow>>> = thread_pool().install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| sweep_seed(&cfg, &source, param, grid, s))
            .collect()
    });
    let (rows, failures) = split_results(&cfg.seeds, results);
    Ok(SweepReport {
        config: cfg,
        param,
        grid: grid.to_vec(),
        rows: rows.into_iter().flatten().collect(),
        failures,
    })
}

impl SweepReport {
    /// Seeds whose `k*` equals the true count, per grid value.
    pub fn hits(&self) -> Vec<usize> {
        self.grid
            .iter()
            .map(|&v| {
                self.rows
                    .iter()
                    .filter(|r| r.value == v && r.true_k == Some(r.k_star))
                    .count()
            })
            .collect()
    }

    /// `k*` per grid value for one seed.
    pub fn curve(&self, seed: u64) -> Vec<usize> {
        self.grid
            .iter()
            .filter_map(|&v| self.rows.iter().find(|r| r.seed == seed && r.value == v).map(|r| r.k_star))
            .collect()
    }

    /// Writes `sweep.json`, `sweep.csv` and the resolved `config.toml`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        write_config(dir, &self.config)?;
        write_json(&dir.join("sweep.json"), self)?;
        let path = dir.join("sweep.csv");
        let mut w = csv_writer(&path)?;
        let name = match self.param {
            SweepParam::T => "t",
            SweepParam::Beta => "beta",
        };
        let mut header = vec!["seed", name, "k_star", "true_k", "b_optimal", "b_fallback"];
        header.extend(MetricReport::NAMES);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.seed.to_string(),
                r.value.to_string(),
                r.k_star.to_string(),
                r.true_k.map_or(String::new(), |k| k.to_string()),
                r.b_optimal.to_string(),
                r.b_fallback.to_string(),
            ];
            rec.extend(metric_fields(r.metrics.as_ref()));
            w.write_record(&rec)?;
        }
        finish(w, &path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub clients: usize,
    pub k_star: usize,
    pub num_blocks: usize,
    pub split: f64,
    pub client_phase: f64,
    pub estimate: f64,
    pub merge: f64,
    pub relabel: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: ExperimentConfig,
    pub rows: Vec<BenchRow>,
}

/// Times one round per `(size, clients)` cell on the config's builtin
/// mixture resized to each size, using the first seed. Cells run one at a time.
pub fn bench(cfg: &ExperimentConfig, sizes: &[usize], clients: &[usize]) -> Result<BenchReport> {
    if sizes.is_empty() || clients.is_empty() {
        return Err(Error::validation("bench needs at least one size and one client count"));
    }
    let cfg = cfg.clone().resolved()?;
    let DatasetSource::Builtin(builtin) = DatasetSource::resolve(&cfg.dataset)? else {
        return Err(Error::validation("bench needs a builtin dataset"));
    };
    let seed = cfg.seeds[0];
    let mut rows = Vec::new();
    for &n in sizes {
        let spec = datagen::scaled(&builtin.spec, n)?;
        let data = datagen::generate(&spec, &mut SeededRng::for_role(seed, StreamRole::Data))?;
        let source = DatasetSource::Builtin(Builtin { spec, ..builtin.clone() });
        for &z in clients {
            let mut fed = cfg.federation_for(&source, seed);
            fed.num_clients = z;
            let out = run_round(&data, &fed, &cfg.pipeline).map_err(|e| {
                Error::Internal(format!("bench cell n={n}, clients={z}: {e}"))
            })?;
            let phase = |k: &str| out.log.phases.get(k).copied().unwrap_or(0.0);
            rows.push(BenchRow {
                n,
                clients: z,
                k_star: out.k_star,
                num_blocks: out.server.num_blocks,
                split: phase("split"),
                client_phase: phase("clients"),
                estimate: phase("estimate"),
                merge: phase("merge"),
                relabel: phase("relabel"),
                total: phase("total"),
            });
        }
    }
    Ok(BenchReport { config: cfg, rows })
}

impl BenchReport {
    /// Writes `bench.json`, `bench.csv` and the resolved `config.toml`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        write_config(dir, &self.config)?;
        write_json(&dir.join("bench.json"), self)?;
        let path = dir.join("bench.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["n", "clients", "k_star", "blocks", "split", "clients_phase", "estimate", "merge", "relabel", "total"])?;
        for r in &self.rows {
            let mut rec = vec![r.n.to_string(), r.clients.to_string(), r.k_star.to_string(), r.num_blocks.to_string()];
            rec.extend([r.split, r.client_phase, r.estimate, r.merge, r.relabel, r.total].map(|v| format!("{v:.6}")));
            w.write_record(&rec)?;
        }
        finish(w, &path)
    }

    /// Least-squares slope of `log(total)` against `log(n)`, over rows with
    /// the given client count.
    pub fn scaling_exponent(&self, clients: usize) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.clients == clients)
            .map(|r| ((r.n as f64).ln(), r.total.max(1e-9).ln()))
            .collect();
        loglog_slope(&pts)
    }
}

/// Ordinary least-squares slope; `None` with fewer than two distinct x values.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (points.len() >= 2 && sxx > 0.0).then(|| sxy / sxx)
}

/// Integer labels from a CSV with a header: the `label` column if there is
/// one, otherwise the last column.
pub fn read_labels(path: &Path) -> Result<Vec<i64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(file));
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::validation(format!("{}: no columns", path.display())));
    }
    let col = headers.iter().position(|h| h.trim() == "label").unwrap_or(headers.len() - 1);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = rec.get(col).unwrap_or("").trim();
        out.push(field.parse().map_err(|_| {
            Error::validation(format!("{} row {i}: label '{field}' is not an integer", path.display()))
        })?);
    }
    Ok(out)
}

/// Scores predicted labels against ground truth, both read from CSV.
pub fn evaluate(truth_path: &Path, pred_path: &Path) -> Result<MetricReport> {
    let truth = Partition::from_labels(&read_labels(truth_path)?);
    let pred = Partition::from_labels(&read_labels(pred_path)?);
    MetricReport::compute(&truth, &pred)
}
