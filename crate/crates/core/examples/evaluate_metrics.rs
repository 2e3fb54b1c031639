//! The five external metrics on a few hand-made label vectors.

use fedkhc::metrics::{f_measure_with, FMeasure, MetricReport};
use fedkhc::Partition;

fn main() -> fedkhc::Result<()> {
    let truth = Partition::from_labels(&[0, 0, 0, 0, 0, 0, 1, 1, 2, 2]);
    let cases = [
        ("identical", vec![5, 5, 5, 5, 5, 5, 7, 7, 9, 9]),
        ("small merged", vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1]),
        ("large split", vec![0, 0, 0, 3, 3, 3, 1, 1, 2, 2]),
        ("one cluster", vec![0; 10]),
    ];
    println!("{:14} {:>7} {:>7} {:>7} {:>7} {:>7} {:>9}", "", "F", "Acc", "NMI", "ARI", "DCV", "pair-F");
    for (name, labels) in cases {
        let pred = Partition::from_labels(&labels);
        let m = MetricReport::compute(&truth, &pred)?;
        let pf = f_measure_with(&truth, &pred, FMeasure::Pairwise)?;
        println!(
            "{name:14} {:7.4} {:7.4} {:7.4} {:7.4} {:7.4} {pf:9.4}",
            m.f_measure, m.accuracy, m.nmi, m.ari, m.dcv
        );
    }
    Ok(())
}
