//! Subcluster statistics and surrogate data.
//!
//! A client never ships raw points. For each subcluster it computes size,
//! centroid, radius, per-dimension standard deviation, mean and covariance,
//! then draws the same number of samples from `N(mean, covariance)`. The
//! statistics and samples together form the client's only message
//! ([`ClientUpload`]), serialized as JSON.

use std::collections::HashSet;
use std::fmt;
use std::io;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{euclidean, Matrix, SeededRng};
use crate::partitioner::LocalPartition;
use crate::{Error, Result};

/// Globally unique subcluster id: originating client and local index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId {
    pub client: usize,
    pub index: usize,
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.client, self.index)
    }
}

impl FromStr for BlockId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Protocol(format!("malformed block id {s:?}"));
        let (c, i) = s.split_once(':').ok_or_else(bad)?;
        Ok(BlockId {
            client: c.parse().map_err(|_| bad())?,
            index: i.parse().map_err(|_| bad())?,
        })
    }
}

/// Statistics of one subcluster.
#[derive(Clone, Debug, PartialEq)]
pub struct SubclusterSummary {
    pub id: BlockId,
    pub size: usize,
    pub centroid: Vec<f64>,
    /// Mean distance from members to the centroid.
    pub radius: f64,
    /// Per-dimension sample standard deviation (`n - 1` denominator).
    pub stddev: Vec<f64>,
    pub mean: Vec<f64>,
    /// Sample covariance (`n - 1` denominator), zero for singletons.
    pub covariance: Vec<Vec<f64>>,
}

/// Centroid, radius and standard deviation of a set of rows.
pub(crate) fn centroid_radius_stddev<'a>(
    rows: impl Iterator<Item = &'a [f64]> + Clone,
    d: usize,
) -> (usize, Vec<f64>, f64, Vec<f64>) {
    let mut n = 0usize;
    let mut centroid = vec![0.0; d];
    for x in rows.clone() {
        n += 1;
        for (c, v) in centroid.iter_mut().zip(x) {
            *c += v;
        }
    }
    if n == 0 {
        return (0, centroid, 0.0, vec![0.0; d]);
    }
    centroid.iter_mut().for_each(|c| *c /= n as f64);
    let mut radius = 0.0;
    let mut ss = vec![0.0; d];
    for x in rows {
        radius += euclidean(x, &centroid);
        for ((s, v), c) in ss.iter_mut().zip(x).zip(&centroid) {
            *s += (v - c) * (v - c);
        }
    }
    radius /= n as f64;
    let stddev = if n > 1 {
        ss.iter().map(|s| (s / (n - 1) as f64).sqrt()).collect()
    } else {
        vec![0.0; d]
    };
    (n, centroid, radius, stddev)
}

/// Statistics of the rows `members` of `points`.
pub fn summarize_members(points: &Matrix, members: &[usize], id: BlockId) -> SubclusterSummary {
    let d = points.cols();
    let rows = members.iter().map(|&i| points.row(i));
    let (size, centroid, radius, stddev) = centroid_radius_stddev(rows, d);
    let mut covariance = vec![vec![0.0; d]; d];
    if size > 1 {
        for &i in members {
            let x = points.row(i);
            for a in 0..d {
                let da = x[a] - centroid[a];
                for b in a..d {
                    covariance[a][b] += da * (x[b] - centroid[b]);
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                covariance[a][b] /= (size - 1) as f64;
                covariance[b][a] = covariance[a][b];
            }
        }
    }
    SubclusterSummary {
        id,
        size,
        mean: centroid.clone(),
        centroid,
        radius,
        stddev,
        covariance,
    }
}

/// Statistics for every subcluster of a local partition.
pub fn summarize(points: &Matrix, part: &LocalPartition) -> Vec<SubclusterSummary> {
    part.subclusters
        .iter()
        .enumerate()
        .map(|(g, members)| {
            summarize_members(
                points,
                members,
                BlockId {
                    client: part.client_id,
                    index: g,
                },
            )
        })
        .collect()
}

fn check_symmetric(cov: &[Vec<f64>]) -> Result<usize> {
    let d = cov.len();
    for (a, row) in cov.iter().enumerate() {
        if row.len() != d {
            return Err(Error::validation(format!(
                "covariance row {a} has {} entries, expected {d}",
                row.len()
            )));
        }
        for b in 0..a {
            if (row[b] - cov[b][a]).abs() > 1e-9 {
                return Err(Error::validation(format!(
                    "covariance is not symmetric at ({a}, {b})"
                )));
            }
        }
    }
    Ok(d)
}

/// Ridge added by [`regularize_covariance`]: `max(1e-9, 1e-6 * trace / d)`.
pub fn ridge_for(cov: &[Vec<f64>]) -> f64 {
    let d = cov.len().max(1);
    let trace: f64 = cov.iter().enumerate().map(|(a, row)| row[a]).sum();
    (1e-6 * trace / d as f64).max(1e-9)
}

/// Adds the scale-aware ridge to the diagonal so the matrix is positive definite.
pub fn regularize_covariance(cov: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_symmetric(cov)?;
    let eps = ridge_for(cov);
    let mut out = cov.to_vec();
    for (a, row) in out.iter_mut().enumerate() {
        row[a] += eps;
    }
    Ok(out)
}

/// Lower-triangular `L` with `L * L^T = cov`.
pub fn cholesky_factor(cov: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = check_symmetric(cov)?;
    let m = DMatrix::from_fn(d, d, |a, b| cov[a][b]);
    m.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Internal("covariance factorization failed".into()))
}

/// Draws `count` rows from `N(mean, L L^T)`.
pub fn sample_gaussian(mean: &[f64], factor: &DMatrix<f64>, count: usize, rng: &mut SeededRng) -> Matrix {
    let d = mean.len();
    let mut out = Matrix::zeros(count, d);
    let mut z = vec![0.0; d];
    for i in 0..count {
        draw_row(mean, factor, &mut z, rng, out.row_mut(i));
    }
    out
}

fn draw_row(mean: &[f64], factor: &DMatrix<f64>, z: &mut [f64], rng: &mut SeededRng, row: &mut [f64]) {
    for v in z.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    for (a, out) in row.iter_mut().enumerate() {
        let mut v = mean[a];
        for (b, zb) in z.iter().enumerate().take(a + 1) {
            v += factor[(a, b)] * zb;
        }
        *out = v;
    }
}

/// One subcluster's statistics plus its surrogate samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateBlock {
    pub summary: SubclusterSummary,
    pub samples: Matrix,
}

/// The single message a client sends to the server.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientUpload {
    pub client_id: usize,
    pub blocks: Vec<SurrogateBlock>,
    /// Radii, parallel to `blocks`.
    pub radii: Vec<f64>,
    /// Sizes, parallel to `blocks`.
    pub sizes: Vec<usize>,
    /// Standard deviations, parallel to `blocks`.
    pub stddevs: Vec<Vec<f64>>,
}

impl ClientUpload {
    pub fn new(client_id: usize, blocks: Vec<SurrogateBlock>) -> Self {
        let radii = blocks.iter().map(|b| b.summary.radius).collect();
        let sizes = blocks.iter().map(|b| b.samples.rows()).collect();
        let stddevs = blocks.iter().map(|b| b.summary.stddev.clone()).collect();
        Self {
            client_id,
            blocks,
            radii,
            sizes,
            stddevs,
        }
    }

    pub fn total_samples(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Serializes the wire format; floats carry 17 significant digits.
    pub fn to_json(&self) -> String {
        let wire = WireUpload {
            client_id: self.client_id,
            blocks: self
                .blocks
                .iter()
                .map(|b| WireBlock {
                    size: b.summary.size,
                    centroid: b.summary.centroid.clone(),
                    radius: b.summary.radius,
                    stddev: b.summary.stddev.clone(),
                    mean: b.summary.mean.clone(),
                    covariance: b.summary.covariance.clone(),
                    samples: b.samples.to_rows(),
                })
                .collect(),
        };
        to_json_precise(&wire)
    }

    /// Parses and validates the wire format.
    pub fn from_json(text: &str) -> Result<Self> {
        let wire: WireUpload = serde_json::from_str(text)
            .map_err(|e| Error::Protocol(format!("malformed upload: {e}")))?;
        let mut blocks = Vec::with_capacity(wire.blocks.len());
        for (index, b) in wire.blocks.into_iter().enumerate() {
            let d = b.centroid.len();
            let shape_ok = d > 0
                && b.stddev.len() == d
                && b.mean.len() == d
                && b.covariance.len() == d
                && b.covariance.iter().all(|r| r.len() == d)
                && !b.samples.is_empty()
                && b.size >= 1;
            if !shape_ok {
                return Err(Error::Protocol(format!(
                    "block {index} of client {} has inconsistent shapes",
                    wire.client_id
                )));
            }
            let samples = Matrix::from_rows(&b.samples)
                .map_err(|e| Error::Protocol(format!("block {index}: {e}")))?;
            if samples.cols() != d {
                return Err(Error::Protocol(format!(
                    "block {index}: samples have {} columns, expected {d}",
                    samples.cols()
                )));
            }
            blocks.push(SurrogateBlock {
                summary: SubclusterSummary {
                    id: BlockId {
                        client: wire.client_id,
                        index,
                    },
                    size: b.size,
                    centroid: b.centroid,
                    radius: b.radius,
                    stddev: b.stddev,
                    mean: b.mean,
                    covariance: b.covariance,
                },
                samples,
            });
        }
        Ok(ClientUpload::new(wire.client_id, blocks))
    }
}

#[derive(Serialize, Deserialize)]
struct WireBlock {
    size: usize,
    centroid: Vec<f64>,
    radius: f64,
    stddev: Vec<f64>,
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    samples: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct WireUpload {
    client_id: usize,
    blocks: Vec<WireBlock>,
}

/// JSON formatter writing every float in scientific notation with 17
/// significant digits.
struct PreciseFloats;

impl serde_json::ser::Formatter for PreciseFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub(crate) fn to_json_precise<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFloats);
    value
        .serialize(&mut ser)
        .expect("in-memory serialization of finite values cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Surrogate generation knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    /// Surrogate rows per raw row; 1.0 uploads an equal amount of data.
    pub volume_multiplier: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            volume_multiplier: 1.0,
        }
    }
}

fn row_key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

/// Draws surrogate samples for every summary and assembles the upload.
///
/// No emitted row is bit-identical to a row of `raw`; a colliding row is
/// redrawn.
pub fn generate_surrogates(
    client_id: usize,
    summaries: &[SubclusterSummary],
    raw: &Matrix,
    cfg: &SurrogateConfig,
    rng: &mut SeededRng,
) -> Result<ClientUpload> {
    if !(cfg.volume_multiplier > 0.0) {
        return Err(Error::validation("volume_multiplier must be positive"));
    }
    let forbidden: HashSet<Vec<u64>> = raw.iter_rows().map(row_key).collect();
    let mut blocks = Vec::with_capacity(summaries.len());
    for summary in summaries {
        let cov = regularize_covariance(&summary.covariance)?;
        let factor = cholesky_factor(&cov)?;
        let count = ((summary.size as f64 * cfg.volume_multiplier).round() as usize).max(1);
        let d = summary.mean.len();
        let mut samples = Matrix::zeros(count, d);
        let mut z = vec![0.0; d];
        for i in 0..count {
            loop {
                draw_row(&summary.mean, &factor, &mut z, rng, samples.row_mut(i));
                if !forbidden.contains(&row_key(samples.row(i))) {
                    break;
                }
            }
        }
        blocks.push(SurrogateBlock {
            summary: summary.clone(),
            samples,
        });
    }
    Ok(ClientUpload::new(client_id, blocks))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id() -> BlockId {
        BlockId { client: 0, index: 0 }
    }

    fn sample_cov(m: &Matrix) -> Vec<Vec<f64>> {
        let all: Vec<usize> = (0..m.rows()).collect();
        summarize_members(m, &all, id()).covariance
    }

    #[test]
    fn singleton_summary_is_degenerate() {
        let pts = Matrix::from_rows(&[vec![0.3, 0.7]]).unwrap();
        let s = summarize_members(&pts, &[0], id());
        assert_eq!(s.size, 1);
        assert_eq!(s.centroid, vec![0.3, 0.7]);
        assert_eq!(s.mean, s.centroid);
        assert_eq!(s.radius, 0.0);
        assert_eq!(s.stddev, vec![0.0, 0.0]);
        assert_eq!(s.covariance, vec![vec![0.0; 2]; 2]);
    }

    #[test]
    fn pair_summary_by_hand() {
        let pts = Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let s = summarize_members(&pts, &[0, 1], id());
        assert_eq!(s.centroid, vec![1.0]);
        assert_eq!(s.radius, 1.0);
        assert!((s.stddev[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.mean, vec![1.0]);
        assert_eq!(s.covariance, vec![vec![2.0]]);
    }

    #[test]
    fn zero_matrix_gets_floor_ridge() {
        let r = regularize_covariance(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(r, vec![vec![1e-9, 0.0], vec![0.0, 1e-9]]);
    }

    #[test]
    fn identity_regularizes_and_factors() {
        let r = regularize_covariance(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(r[0][0], 1.0 + 1e-6);
        assert!(cholesky_factor(&r).is_ok());
    }

    #[test]
    fn rank_one_matrix_becomes_positive_definite() {
        let cov = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let eps = ridge_for(&cov);
        let r = regularize_covariance(&cov).unwrap();
        let m = DMatrix::from_fn(2, 2, |a, b| r[a][b]);
        let mut eig: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        assert!((eig[0] - eps).abs() < 1e-12, "{eig:?}");
        assert!((eig[1] - (2.0 + eps)).abs() < 1e-12);
        assert!(cholesky_factor(&r).is_ok());
    }

    #[test]
    fn asymmetric_covariance_is_rejected() {
        assert!(regularize_covariance(&[vec![1.0, 0.5], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn unregularized_singular_matrix_fails_to_factor() {
        assert!(matches!(
            cholesky_factor(&[vec![1.0, 1.0], vec![1.0, 1.0 - 1e-3]]),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn tiny_ridge_sample_mean_near_zero() {
        let mut rng = SeededRng::new(11, 0);
        let cov = regularize_covariance(&vec![vec![0.0; 3]; 3]).unwrap();
        let f = cholesky_factor(&cov).unwrap();
        let s = sample_gaussian(&[0.0; 3], &f, 1000, &mut rng);
        let all: Vec<usize> = (0..s.rows()).collect();
        let summary = summarize_members(&s, &all, id());
        assert!(summary.mean.iter().all(|m| m.abs() < 0.15));
    }

    #[test]
    fn sample_covariance_tracks_generator() {
        let mut rng = SeededRng::new(5, 0);
        let cov = vec![vec![1.0, 0.5], vec![0.5, 1.0]];
        let f = cholesky_factor(&cov).unwrap();
        let s = sample_gaussian(&[0.0, 0.0], &f, 5000, &mut rng);
        let est = sample_cov(&s);
        for a in 0..2 {
            for b in 0..2 {
                assert!((est[a][b] - cov[a][b]).abs() < 0.1, "{est:?}");
            }
        }
    }

    #[test]
    fn singleton_surrogate_differs_from_raw_point() {
        let raw = Matrix::from_rows(&[vec![0.4, 0.6]]).unwrap();
        let summaries = vec![summarize_members(&raw, &[0], id())];
        let mut rng = SeededRng::new(1, 0);
        let up = generate_surrogates(0, &summaries, &raw, &SurrogateConfig::default(), &mut rng).unwrap();
        let s = up.blocks[0].samples.row(0);
        assert_ne!(s, raw.row(0));
        // sqrt(1e-9) ~ 3e-5 noise
        assert!(euclidean(s, raw.row(0)) < 1e-3);
    }

    #[test]
    fn degenerate_block_never_repeats_raw_point() {
        let raw = Matrix::from_rows(&[vec![0.5]]).unwrap();
        let mut summary = summarize_members(&raw, &[0], id());
        summary.size = 50;
        let mut rng = SeededRng::new(3, 0);
        let up = generate_surrogates(0, &[summary], &raw, &SurrogateConfig::default(), &mut rng).unwrap();
        assert_eq!(up.blocks[0].samples.rows(), 50);
        assert!(up.blocks[0].samples.iter_rows().all(|r| r != raw.row(0)));
    }

    #[test]
    fn upload_lists_mirror_blocks() {
        let raw = Matrix::from_rows(&[vec![0.1, 0.1], vec![0.2, 0.1], vec![0.9, 0.9]]).unwrap();
        let part = LocalPartition {
            client_id: 4,
            subclusters: vec![vec![0, 1], vec![2]],
            termination: crate::partitioner::Termination::Direct,
            displacements: vec![],
            seeds_added: 0,
        };
        let summaries = summarize(&raw, &part);
        let mut rng = SeededRng::new(9, 4);
        let up = generate_surrogates(4, &summaries, &raw, &SurrogateConfig::default(), &mut rng).unwrap();
        assert_eq!(up.sizes, vec![2, 1]);
        assert_eq!(up.radii.len(), 2);
        assert_eq!(up.stddevs.len(), 2);
        assert_eq!(up.blocks[1].summary.id, BlockId { client: 4, index: 1 });
    }

    #[test]
    fn wire_format_is_exact_and_has_expected_keys() {
        let raw = Matrix::from_rows(&[vec![0.1, 0.3], vec![0.2, 0.1], vec![0.15, 0.2]]).unwrap();
        let part = LocalPartition {
            client_id: 2,
            subclusters: vec![vec![0, 1, 2]],
            termination: crate::partitioner::Termination::Direct,
            displacements: vec![],
            seeds_added: 0,
        };
        let mut rng = SeededRng::new(9, 2);
        let up = generate_surrogates(2, &summarize(&raw, &part), &raw, &SurrogateConfig::default(), &mut rng)
            .unwrap();
        let text = up.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["client_id"], 2);
        let block = &v["blocks"][0];
        for key in ["size", "centroid", "radius", "stddev", "mean", "covariance", "samples"] {
            assert!(block.get(key).is_some(), "missing {key}");
        }
        assert!(text.contains("e-1"), "floats should be in scientific notation: {text}");
        let back = ClientUpload::from_json(&text).unwrap();
        assert_eq!(back, up);
    }

    #[test]
    fn malformed_upload_is_a_protocol_error() {
        assert!(matches!(ClientUpload::from_json("{\"client_id\": 0}"), Err(Error::Protocol(_))));
        let bad = r#"{"client_id":0,"blocks":[{"size":1,"centroid":[0.5],"radius":0,"stddev":[0,0],"mean":[0.5],"covariance":[[0]],"samples":[[0.5]]}]}"#;
        assert!(matches!(ClientUpload::from_json(bad), Err(Error::Protocol(_))));
    }

    #[test]
    fn block_id_round_trip() {
        let b = BlockId { client: 12, index: 3 };
        assert_eq!(b.to_string(), "12:3");
        assert_eq!("12:3".parse::<BlockId>().unwrap(), b);
        assert!("12-3".parse::<BlockId>().is_err());
    }
}
