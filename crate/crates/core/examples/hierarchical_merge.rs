//! Merges uploaded blocks down to the true cluster count and prints the
//! last few merges.

use fedkhc::datagen::{builtin_specs, generate};
use fedkhc::federation::{run_clients, FederationConfig, PipelineConfig};
use fedkhc::merger::{merge_to_k, MergeConfig};
use fedkhc::surrogate::{ClientUpload, SurrogateBlock};
use fedkhc::SeededRng;

fn main() -> fedkhc::Result<()> {
    let data = generate(&builtin_specs()["gaussian"], &mut SeededRng::new(0, 3))?;
    let phase = run_clients(&data, &FederationConfig::default(), &PipelineConfig::default())?;
    let blocks: Vec<SurrogateBlock> = phase
        .outcomes
        .iter()
        .map(|o| ClientUpload::from_json(&o.message).map(|u| u.blocks))
        .collect::<fedkhc::Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    for beta in [0.0, 0.5, 1.0] {
        let out = merge_to_k(&blocks, 4, &MergeConfig { beta, ..MergeConfig::default() })?;
        let mut sizes: Vec<usize> = out.clusters.iter().map(|c| c.size).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        println!("beta {beta}: {} merges, cluster sizes {sizes:?}", out.log.len());
    }
    let out = merge_to_k(&blocks, 4, &MergeConfig::default())?;
    for step in out.log.iter().rev().take(3) {
        println!("  {step:?}");
    }
    Ok(())
}
