//! k*(t) curves over the short-distance percentile grid, one line per seed.

use fedkhc::experiment::{sweep, ExperimentConfig, SweepParam};

fn main() -> fedkhc::Result<()> {
    let dataset = std::env::args().nth(1).unwrap_or_else(|| "ids2".into());
    let cfg = ExperimentConfig {
        dataset,
        seeds: (0..5).collect(),
        ..ExperimentConfig::default()
    };
    let grid = SweepParam::T.default_grid();
    let report = sweep(&cfg, SweepParam::T, &grid)?;
    println!("t     {grid:?}");
    for &seed in &cfg.seeds {
        println!("seed {seed} {:?}", report.curve(seed));
    }
    println!("hits  {:?}", report.hits());
    Ok(())
}
