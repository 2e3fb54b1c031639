//! Builds one client's upload and shows what actually leaves the client.

use fedkhc::datagen::{builtin_specs, generate};
use fedkhc::partitioner::{snp_partition, SnpConfig};
use fedkhc::surrogate::{generate_surrogates, summarize, ClientUpload, SurrogateConfig};
use fedkhc::SeededRng;

fn main() -> fedkhc::Result<()> {
    let data = generate(&builtin_specs()["gaussian"], &mut SeededRng::new(1, 3))?;
    let mut rng = SeededRng::new(1, 1000);
    let part = snp_partition(data.points(), 0, &SnpConfig::default(), &mut rng)?;
    let summaries = summarize(data.points(), &part);
    let upload = generate_surrogates(0, &summaries, data.points(), &SurrogateConfig::default(), &mut rng)?;

    let message = upload.to_json();
    println!("{} blocks, {} surrogate rows, {} bytes", upload.blocks.len(), upload.total_samples(), message.len());
    for b in upload.blocks.iter().take(5) {
        let s = &b.summary;
        println!("  block {} size {:4} centroid [{:.3}, {:.3}] radius {:.4}", s.id, s.size, s.centroid[0], s.centroid[1], s.radius);
    }

    let raw: std::collections::HashSet<Vec<u64>> =
        data.points().iter_rows().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
    let decoded = ClientUpload::from_json(&message)?;
    let leaked = decoded
        .blocks
        .iter()
        .flat_map(|b| b.samples.iter_rows())
        .filter(|r| raw.contains(&r.iter().map(|v| v.to_bits()).collect::<Vec<_>>()))
        .count();
    println!("raw rows present in the upload: {leaked}");
    Ok(())
}
