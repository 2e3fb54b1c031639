//! One-shot federated hierarchical clustering.
//!
//! Each client over-segments its local data into micro-subclusters, computes
//! their statistics and replaces the raw points with multivariate-normal
//! surrogate samples. The server receives exactly one message per client,
//! estimates the number of global clusters from the subcluster centroids and
//! merges the subclusters bottom-up until that many remain. Global labels are
//! then returned to the clients.
//!
//! Module map:
//!
//! - [`model`]: point sets, partitions, seeded RNG streams, CSV I/O.
//! - [`partitioner`]: client-side micro-partitioning (competitive learning or k-means).
//! - [`surrogate`]: subcluster statistics, surrogate sampling, the upload wire format.
//! - [`cardinality`]: growing cell structures and the natural-neighbor cluster-count estimate.
//! - [`merger`]: server-side hierarchical merging with the special distance.
//! - [`federation`]: client splits and the one-shot round.
//! - [`datagen`]: seeded synthetic Gaussian mixtures.
//! - [`metrics`]: F-measure, accuracy, NMI, ARI and DCV.
//! - [`experiment`]: config-driven runs, sweeps and benchmarks behind the `fedkhc` binary.

pub mod cardinality;
pub mod datagen;
mod error;
pub mod experiment;
pub mod federation;
pub mod merger;
pub mod metrics;
pub mod model;
pub mod partitioner;
pub mod surrogate;

pub use error::{Error, Result};
pub use model::{Matrix, Partition, PointSet, SeededRng};
