//! Pipeline wall-clock over growing data sizes with 30 clients.
//!
//! `cargo run --release --example bench -- 1000,10000,100000`

use fedkhc::experiment::{bench, ExperimentConfig};

fn main() -> fedkhc::Result<()> {
    let sizes: Vec<usize> = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "1000,4000,16000".into())
        .split(',')
        .map(|s| s.trim().parse().expect("size"))
        .collect();
    let report = bench(&ExperimentConfig::default(), &sizes, &[30])?;
    for r in &report.rows {
        println!(
            "n {:7}  clients {:6.3}s  estimate {:6.3}s  merge {:6.3}s  total {:7.3}s  blocks {}",
            r.n, r.client_phase, r.estimate, r.merge, r.total, r.num_blocks
        );
    }
    if let Some(slope) = report.scaling_exponent(30) {
        println!("log-log slope {slope:.3}");
    }
    Ok(())
}
