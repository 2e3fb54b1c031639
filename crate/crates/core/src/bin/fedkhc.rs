//! Command-line front end for the experiment runner.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedkhc::experiment::{self, ExperimentConfig, SweepParam};
use fedkhc::metrics::MetricReport;

#[derive(Parser)]
#[command(name = "fedkhc", version, about = "One-shot federated clustering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Builtin dataset name or CSV path, overriding `dataset`.
    #[arg(long)]
    dataset: Option<String>,
}

impl Common {
    fn load(&self) -> fedkhc::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
            cfg.repeats = None;
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.resolved()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a builtin synthetic dataset as CSV.
    GenerateData {
        name: Option<String>,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One federated round per seed, with metric reports.
    Run(Common),
    /// Vary t (estimate only) or beta (full rounds) over a grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_param, default_value = "t")]
        param: SweepParam,
        /// Comma-separated grid values; a default grid is used when omitted.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Time the pipeline over data sizes and client counts.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [1000usize, 10000, 100000])]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [30usize])]
        clients: Vec<usize>,
    },
    /// Score predicted labels against ground-truth labels.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Also write the metrics as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_param(s: &str) -> Result<SweepParam, String> {
    s.parse().map_err(|e: fedkhc::Error| e.to_string())
}

fn parse_grid(text: &str) -> fedkhc::Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| fedkhc::Error::Validation(format!("grid value '{s}' is not a number")))
        })
        .collect()
}

fn print_metrics(m: &MetricReport) {
    for (name, v) in MetricReport::NAMES.iter().zip(m.values()) {
        println!("{name:10} {v:.4}");
    }
}

fn execute(cli: Cli) -> fedkhc::Result<bool> {
    match cli.command {
        Command::GenerateData { name, dataset, seed, out } => {
            let name = name
                .or(dataset)
                .ok_or_else(|| fedkhc::Error::Validation("give a dataset name".into()))?;
            let data = match &out {
                Some(path) => {
                    let file = std::fs::File::create(path)
                        .map_err(|e| fedkhc::Error::Validation(format!("{}: {e}", path.display())))?;
                    experiment::generate_data(&name, seed, std::io::BufWriter::new(file))?
                }
                None => experiment::generate_data(&name, seed, std::io::stdout().lock())?,
            };
            if let Some(path) = out {
                eprintln!("wrote {} rows of {name} to {}", data.len(), path.display());
            }
            Ok(true)
        }
        Command::Run(common) => {
            let cfg = common.load()?;
            let report = experiment::run(&cfg)?;
            report.write(&cfg.output_dir)?;
            for r in &report.runs {
                println!("seed {:3}  k* {:2}  {}", r.seed, r.k_star, match &r.metrics {
                    Some(m) => format!("ari {:.4}  nmi {:.4}", m.ari, m.nmi),
                    None => "unlabeled".into(),
                });
            }
            if let Some(s) = &report.summary {
                for (name, col) in MetricReport::NAMES.iter().zip(s.columns()) {
                    println!("{name:10} {col}");
                }
            }
            for f in &report.failures {
                eprintln!("seed {} failed: {}", f.seed, f.error);
            }
            println!("reports in {}", cfg.output_dir.display());
            Ok(report.failures.is_empty())
        }
        Command::Sweep { common, param, grid } => {
            let cfg = common.load()?;
            let grid = match grid {
                Some(text) => parse_grid(&text)?,
                None => param.default_grid(),
            };
            let report = experiment::sweep(&cfg, param, &grid)?;
            report.write(&cfg.output_dir)?;
            for (v, hits) in grid.iter().zip(report.hits()) {
                println!("{v:8.3}  true-k hits {hits}/{}", cfg.seeds.len() - report.failures.len());
            }
            for f in &report.failures {
                eprintln!("seed {} failed: {}", f.seed, f.error);
            }
            Ok(report.failures.is_empty())
        }
        Command::Bench { common, sizes, clients } => {
            let cfg = common.load()?;
            let report = experiment::bench(&cfg, &sizes, &clients)?;
            report.write(&cfg.output_dir)?;
            for r in &report.rows {
                println!("n {:7}  Z {:3}  total {:8.3}s  k* {}", r.n, r.clients, r.total, r.k_star);
            }
            for &z in &clients {
                if let Some(slope) = report.scaling_exponent(z) {
                    println!("Z {z}: log-log slope {slope:.3}");
                }
            }
            Ok(true)
        }
        Command::Evaluate { truth, pred, out } => {
            let m = experiment::evaluate(&truth, &pred)?;
            print_metrics(&m);
            if let Some(path) = out {
                let text = serde_json::to_string_pretty(&m)?;
                std::fs::write(&path, text)
                    .map_err(|e| fedkhc::Error::Validation(format!("{}: {e}", path.display())))?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
