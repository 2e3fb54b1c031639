//! Over-segments one client's share of ids2 and reports how pure the
//! micro-subclusters are.

use fedkhc::datagen::{builtin_specs, generate};
use fedkhc::federation::split_iid;
use fedkhc::partitioner::{grid_partition, snp_partition, SnpConfig};
use fedkhc::SeededRng;

fn main() -> fedkhc::Result<()> {
    let data = generate(&builtin_specs()["ids2"], &mut SeededRng::new(0, 3))?;
    let labels = data.labels().unwrap();
    let slices = split_iid(&data, 3, &mut SeededRng::new(0, 1))?;
    let slice = &slices[0];

    let snp = snp_partition(&slice.points, 0, &SnpConfig::default(), &mut SeededRng::new(0, 2))?;
    let grid = grid_partition(&slice.points, 0, snp.len())?;
    for (name, part) in [("snp", &snp), ("grid", &grid)] {
        part.check(slice.points.rows())?;
        let pure: usize = part
            .subclusters
            .iter()
            .map(|g| {
                let mut counts = [0usize; 5];
                for &i in g {
                    counts[labels[slice.indices[i]]] += 1;
                }
                *counts.iter().max().unwrap()
            })
            .sum();
        println!(
            "{name:4} {} subclusters, purity {:.4}, termination {:?}",
            part.len(),
            pure as f64 / slice.points.rows() as f64,
            part.termination
        );
    }
    println!("snp added {} seeds over {} epochs", snp.seeds_added, snp.displacements.len());
    Ok(())
}
