//! A full one-shot round on a builtin dataset, scored against ground truth.
//!
//! `cargo run --release --example federated_round -- gaussian_non_iid 3`

use fedkhc::datagen::{generate, lookup};
use fedkhc::federation::{run_round, FederationConfig, PipelineConfig, SplitMode};
use fedkhc::metrics::MetricReport;
use fedkhc::model::StreamRole;
use fedkhc::SeededRng;

fn main() -> fedkhc::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "ids2_non_iid".into());
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let b = lookup(&name)?;
    let data = generate(&b.spec, &mut SeededRng::for_role(seed, StreamRole::Data))?;
    let fed = FederationConfig {
        split_mode: if b.non_iid { SplitMode::ClustersPerClient } else { SplitMode::Iid },
        seed,
        ..FederationConfig::default()
    };
    let out = run_round(&data, &fed, &PipelineConfig::default())?;
    let m = MetricReport::compute(&data.ground_truth().unwrap(), &out.partition)?;
    println!("{name} seed {seed}: k* = {} (true {})", out.k_star, b.spec.components.len());
    println!("uploads {:?}, bytes {:?}", out.log.uploads_per_client, out.log.bytes_per_client);
    println!("subclusters per client {:?}", out.log.subclusters_per_client);
    println!("F {:.4}  Acc {:.4}  NMI {:.4}  ARI {:.4}  DCV {:.4}", m.f_measure, m.accuracy, m.nmi, m.ari, m.dcv);
    println!("phases {:?}", out.log.phases);
    Ok(())
}
