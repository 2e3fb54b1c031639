//! Shared domain types: dense matrices, normalized point sets, partitions and
//! the seeded random streams every stochastic stage draws from.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from a flat row-major buffer.
    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::validation(format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::validation(format!(
                    "row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + Clone + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }

    /// Applies `f` to every entry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Samples with features in `[0, 1]` and optional ground-truth labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    points: Matrix,
    labels: Option<Vec<usize>>,
    dataset_id: String,
}

impl PointSet {
    /// Wraps already-normalized points. Coordinates must be finite and in
    /// `[0, 1]`; labels must be contiguous ids `0..K`.
    pub fn new(points: Matrix, labels: Option<Vec<usize>>, dataset_id: impl Into<String>) -> Result<Self> {
        if points.rows() == 0 || points.cols() == 0 {
            return Err(Error::validation("point set must have n >= 1 and d >= 1"));
        }
        for (i, row) in points.iter_rows().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::validation(format!(
                        "coordinate ({i}, {j}) = {v} is outside [0, 1]"
                    )));
                }
            }
        }
        if let Some(labels) = &labels {
            check_labels(labels, points.rows())?;
        }
        Ok(Self {
            points,
            labels,
            dataset_id: dataset_id.into(),
        })
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    /// Number of ground-truth classes, if labelled.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    pub fn ground_truth(&self) -> Option<Partition> {
        self.labels
            .as_ref()
            .map(|l| Partition::from_labels(l))
    }

    pub fn with_dataset_id(mut self, id: impl Into<String>) -> Self {
        self.dataset_id = id.into();
        self
    }
}

fn check_labels(labels: &[usize], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::validation(format!(
            "{} labels for {n} points",
            labels.len()
        )));
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; k];
    for &l in labels {
        seen[l] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::validation(format!(
            "label ids are not contiguous: {missing} is missing from 0..{k}"
        )));
    }
    Ok(())
}

/// Per-dimension min-max scaling to `[0, 1]`. Constant dimensions map to 0.
pub fn normalize(raw: &Matrix) -> Result<Matrix> {
    if raw.rows() == 0 || raw.cols() == 0 {
        return Err(Error::validation("cannot normalize an empty matrix"));
    }
    let d = raw.cols();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for (i, row) in raw.iter_rows().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::validation(format!(
                    "non-finite value {v} at row {i}, column {j}"
                )));
            }
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let mut out = raw.clone();
    for i in 0..out.rows() {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            let range = hi[j] - lo[j];
            *v = if range > 0.0 {
                ((*v - lo[j]) / range).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
    }
    Ok(out)
}

/// Normalizes `raw` and wraps it as a [`PointSet`].
pub fn normalize_points(
    raw: &Matrix,
    labels: Option<Vec<usize>>,
    dataset_id: impl Into<String>,
) -> Result<PointSet> {
    PointSet::new(normalize(raw)?, labels, dataset_id)
}

/// A labelling with contiguous cluster ids `0..k`.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Partition {
    assignment: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Validates that ids are contiguous and each one is used.
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        check_labels(&assignment, assignment.len())?;
        let k = assignment.iter().copied().max().map_or(0, |m| m + 1);
        Ok(Self { assignment, k })
    }

    /// Compacts arbitrary labels to `0..k` in order of first appearance.
    pub fn from_labels<L: Copy + Eq + std::hash::Hash>(labels: &[L]) -> Self {
        let mut ids = HashMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = ids.len();
                *ids.entry(*l).or_insert(next)
            })
            .collect();
        Self {
            assignment,
            k: ids.len(),
        }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Role of a random stream within one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamRole {
    Split,
    Client(usize),
    Server,
    Data,
}

impl StreamRole {
    fn stream_id(self) -> u64 {
        match self {
            StreamRole::Split => 1,
            StreamRole::Server => 2,
            StreamRole::Data => 3,
            StreamRole::Client(z) => 1_000 + z as u64,
        }
    }
}

/// Deterministic random stream keyed by `(seed, stream_id)`.
///
/// Every client owns its own stream, so the bytes a client sees do not depend
/// on how many clients run concurrently or in what order.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn for_role(seed: u64, role: StreamRole) -> Self {
        Self::new(seed, role.stream_id())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Raw (not yet normalized) table read from CSV.
#[derive(Clone, Debug)]
pub struct RawDataset {
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
    pub columns: Vec<String>,
}

/// Reads the dataset CSV format: a header row, numeric feature columns and an
/// optional final `label` column holding integer class ids.
///
/// Labels are compacted to `0..K` in order of first appearance.
pub fn read_csv<R: Read>(reader: R) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let has_label = headers.last().is_some_and(|h| h == "label");
    let n_features = headers.len() - usize::from(has_label);
    if n_features == 0 {
        return Err(Error::validation("CSV has no feature columns"));
    }
    let mut data = Vec::new();
    let mut raw_labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::validation(format!(
                "row {i} has {} fields, expected {}",
                record.len(),
                headers.len()
            )));
        }
        for j in 0..n_features {
            let field = record[j].trim();
            let v: f64 = field.parse().map_err(|_| {
                Error::validation(format!("row {i}, column {j}: '{field}' is not a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::validation(format!(
                    "non-finite value at row {i}, column {j}"
                )));
            }
            data.push(v);
        }
        if has_label {
            let field = record[n_features].trim();
            let l: i64 = field.parse().map_err(|_| {
                Error::validation(format!("row {i}: label '{field}' is not an integer"))
            })?;
            raw_labels.push(l);
        }
    }
    let rows = data.len() / n_features;
    let labels = has_label.then(|| Partition::from_labels(&raw_labels).assignment);
    Ok(RawDataset {
        features: Matrix::from_flat(rows, n_features, data)?,
        labels,
        columns: headers[..n_features].to_vec(),
    })
}

pub fn read_csv_path(path: &Path) -> Result<RawDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file))
}

/// Writes features as `x0..x{d-1}` columns plus a `label` column when labels exist.
pub fn write_csv<W: Write>(writer: W, points: &Matrix, labels: Option<&[usize]>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..points.cols()).map(|j| format!("x{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    wtr.write_record(&header)?;
    for (i, row) in points.iter_rows().enumerate() {
        let mut record: Vec<String> = row.iter().map(|v| format!("{v:.17}")).collect();
        if let Some(labels) = labels {
            record.push(labels[i].to_string());
        }
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_csv_path(path: &Path, points: &Matrix, labels: Option<&[usize]>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), points, labels)
}
