//! External clustering-quality metrics.
//!
//! All metrics are computed from a [`ContingencyTable`] and are invariant
//! under relabeling of either partition.

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix as PfMatrix;
use serde::{Deserialize, Serialize};

use crate::model::Partition;
use crate::{Error, Result};

/// Co-occurrence counts of true classes (rows) and predicted clusters (columns).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<usize>>,
    row_sums: Vec<usize>,
    col_sums: Vec<usize>,
    n: usize,
}

impl ContingencyTable {
    pub fn new(truth: &Partition, pred: &Partition) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::validation(format!(
                "partitions differ in length: {} vs {}",
                truth.len(),
                pred.len()
            )));
        }
        let mut counts = vec![vec![0; pred.k()]; truth.k()];
        for (&t, &p) in truth.assignment().iter().zip(pred.assignment()) {
            counts[t][p] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..pred.k()).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            n: truth.len(),
        })
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn row_sums(&self) -> &[usize] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[usize] {
        &self.col_sums
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

fn entropy(sizes: &[usize], n: f64) -> f64 {
    sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the geometric mean of the entropies.
pub fn nmi(truth: &Partition, pred: &Partition) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    Ok(nmi_from(&t))
}

fn nmi_from(t: &ContingencyTable) -> f64 {
    if t.n == 0 {
        return 1.0;
    }
    let n = t.n as f64;
    let ht = entropy(&t.row_sums, n);
    let hp = entropy(&t.col_sums, n);
    if ht == 0.0 && hp == 0.0 {
        return 1.0;
    }
    if ht == 0.0 || hp == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (t.row_sums[i] as f64 * t.col_sums[j] as f64)).ln();
            }
        }
    }
    (mi / (ht * hp).sqrt()).clamp(0.0, 1.0)
}

fn pairs(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index.
pub fn ari(truth: &Partition, pred: &Partition) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    Ok(ari_from(&t))
}

fn ari_from(t: &ContingencyTable) -> f64 {
    let index: f64 = t.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let a: f64 = t.row_sums.iter().map(|&c| pairs(c)).sum();
    let b: f64 = t.col_sums.iter().map(|&c| pairs(c)).sum();
    let total = pairs(t.n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = a * b / total;
    let max = 0.5 * (a + b);
    if max == expected {
        // both partitions are all-singletons or all-one-cluster
        return if a == b { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

/// Fraction of points matched under the best one-to-one label mapping.
pub fn accuracy(truth: &Partition, pred: &Partition) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    Ok(accuracy_from(&t))
}

fn accuracy_from(t: &ContingencyTable) -> f64 {
    if t.n == 0 {
        return 1.0;
    }
    let size = t.counts.len().max(t.col_sums.len());
    let mut weights = PfMatrix::new(size, size, 0i64);
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            weights[(i, j)] = c as i64;
        }
    }
    let (matched, _) = kuhn_munkres(&weights);
    matched as f64 / t.n as f64
}

/// F-measure flavor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FMeasure {
    /// Class-size weighted F1 of each class against its best cluster.
    #[default]
    BestMatch,
    /// F1 over co-clustered point pairs.
    Pairwise,
}

pub fn f_measure(truth: &Partition, pred: &Partition) -> Result<f64> {
    f_measure_with(truth, pred, FMeasure::BestMatch)
}

pub fn f_measure_with(truth: &Partition, pred: &Partition, variant: FMeasure) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    Ok(match variant {
        FMeasure::BestMatch => best_match_f(&t),
        FMeasure::Pairwise => pairwise_f(&t),
    })
}

fn best_match_f(t: &ContingencyTable) -> f64 {
    if t.n == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        let best = row
            .iter()
            .enumerate()
            .map(|(j, &c)| 2.0 * c as f64 / (t.row_sums[i] + t.col_sums[j]) as f64)
            .fold(0.0, f64::max);
        total += t.row_sums[i] as f64 * best;
    }
    total / t.n as f64
}

fn pairwise_f(t: &ContingencyTable) -> f64 {
    let both: f64 = t.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let same_truth: f64 = t.row_sums.iter().map(|&c| pairs(c)).sum();
    let same_pred: f64 = t.col_sums.iter().map(|&c| pairs(c)).sum();
    if same_truth + same_pred == 0.0 {
        return 1.0;
    }
    2.0 * both / (same_truth + same_pred)
}

/// Coefficient of variation of cluster sizes, population standard deviation.
pub fn size_cv(sizes: &[usize]) -> f64 {
    let sizes: Vec<f64> = sizes.iter().filter(|&&s| s > 0).map(|&s| s as f64).collect();
    if sizes.len() < 2 {
        return 0.0;
    }
    let k = sizes.len() as f64;
    let mean = sizes.iter().sum::<f64>() / k;
    let var = sizes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / k;
    var.sqrt() / mean
}

/// `|CV(pred sizes) - CV(truth sizes)|`.
pub fn dcv(truth: &Partition, pred: &Partition) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    Ok(dcv_from(&t))
}

fn dcv_from(t: &ContingencyTable) -> f64 {
    (size_cv(&t.col_sums) - size_cv(&t.row_sums)).abs()
}

/// All five metrics of one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub f_measure: f64,
    pub accuracy: f64,
    pub nmi: f64,
    pub ari: f64,
    pub dcv: f64,
}

impl MetricReport {
    pub const NAMES: [&'static str; 5] = ["f_measure", "accuracy", "nmi", "ari", "dcv"];

    pub fn compute(truth: &Partition, pred: &Partition) -> Result<Self> {
        let t = ContingencyTable::new(truth, pred)?;
        Ok(Self {
            f_measure: best_match_f(&t),
            accuracy: accuracy_from(&t),
            nmi: nmi_from(&t),
            ari: ari_from(&t),
            dcv: dcv_from(&t),
        })
    }

    pub fn values(&self) -> [f64; 5] {
        [self.f_measure, self.accuracy, self.nmi, self.ari, self.dcv]
    }
}

/// Mean and population standard deviation of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4}±{:.4}", self.mean, self.std)
    }
}

/// Per-metric mean and spread over repeated runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub runs: usize,
    pub f_measure: MeanStd,
    pub accuracy: MeanStd,
    pub nmi: MeanStd,
    pub ari: MeanStd,
    pub dcv: MeanStd,
}

impl MetricSummary {
    pub fn aggregate(reports: &[MetricReport]) -> Self {
        let col = |f: fn(&MetricReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
        Self {
            runs: reports.len(),
            f_measure: col(|r| r.f_measure),
            accuracy: col(|r| r.accuracy),
            nmi: col(|r| r.nmi),
            ari: col(|r| r.ari),
            dcv: col(|r| r.dcv),
        }
    }

    pub fn columns(&self) -> [MeanStd; 5] {
        [self.f_measure, self.accuracy, self.nmi, self.ari, self.dcv]
    }
}
