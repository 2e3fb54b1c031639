//! Server-side cluster-count estimate from uploaded centroids, with the
//! neighbor-graph diagnostics.

use fedkhc::cardinality::select_cluster_count;
use fedkhc::datagen::{builtin_specs, generate};
use fedkhc::federation::{run_clients, FederationConfig, PipelineConfig};
use fedkhc::surrogate::ClientUpload;
use fedkhc::{Matrix, SeededRng};

fn main() -> fedkhc::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "ids2".into());
    let spec = &builtin_specs()[name.as_str()];
    let data = generate(spec, &mut SeededRng::new(0, 3))?;
    let pipeline = PipelineConfig::default();
    let phase = run_clients(&data, &FederationConfig::default(), &pipeline)?;

    let mut centroids = Vec::new();
    for o in &phase.outcomes {
        for b in ClientUpload::from_json(&o.message)?.blocks {
            centroids.push(b.summary.centroid);
        }
    }
    let centroids = Matrix::from_rows(&centroids)?;
    let report = select_cluster_count(&centroids, &pipeline.cardinality, &pipeline.gcs, &mut SeededRng::new(0, 2))?;
    let g = &report.estimate.graph;
    println!("{name}: {} centroids -> {} nodes", centroids.rows(), report.gcs.nodes.rows());
    println!("T = {:.4}, b_opt = {}, fallback = {}", g.threshold, g.b_optimal, g.b_fallback);
    println!("P_b = {:?}", g.p_curve.iter().map(|p| (p * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    println!("D_s = {:.4} from {} natural-neighbor pairs", g.d_s, g.snn_pairs.len());
    println!("k* = {} (true {})", report.estimate.k_star, spec.components.len());
    Ok(())
}
