//! Seeded Gaussian-mixture generators for the builtin synthetic datasets.
//!
//! Component sizes are exact (no multinomial draw of counts); labels are the
//! component index and the result is min-max normalized. The constants live
//! in `data/mixtures.toml`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{normalize_points, Matrix, PointSet, SeededRng};
use crate::surrogate::{cholesky_factor, sample_gaussian};
use crate::{Error, Result};

/// The checked-in builtin mixture file.
pub const BUILTIN_SPEC_FILE: &str = include_str!("../data/mixtures.toml");

/// Builtin names that reuse a mixture with the cluster-per-client split.
pub const NON_IID_SUFFIX: &str = "_non_iid";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub size: usize,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub name: String,
    pub components: Vec<Component>,
}

impl MixtureSpec {
    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    pub fn total(&self) -> usize {
        self.components.iter().map(|c| c.size).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.size).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::validation(format!("mixture {}: {msg}", self.name)));
        if self.components.is_empty() {
            return err("no components".into());
        }
        let d = self.dim();
        if d == 0 {
            return err("zero-dimensional mean".into());
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.size == 0 {
                return err(format!("component {i} has size 0"));
            }
            if c.mean.len() != d || c.covariance.len() != d || c.covariance.iter().any(|r| r.len() != d) {
                return err(format!("component {i} does not have dimension {d}"));
            }
            if cholesky_factor(&c.covariance).is_err() {
                return err(format!("component {i} covariance is not positive definite"));
            }
            for (j, other) in self.components[..i].iter().enumerate() {
                if other.mean == c.mean {
                    return err(format!("components {j} and {i} share a mean"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    #[allow(dead_code)]
    version: u32,
    dataset: Vec<DatasetEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetEntry {
    name: String,
    #[serde(default)]
    component: Vec<Component>,
    base: Option<String>,
    take: Option<Vec<usize>>,
}

/// Parses a mixture file; entries with `base` pick components of an
/// earlier entry by index.
pub fn parse_specs(text: &str) -> Result<BTreeMap<String, MixtureSpec>> {
    let file: SpecFile = toml::from_str(text).map_err(|e| Error::Config(format!("mixture file: {e}")))?;
    let mut out: BTreeMap<String, MixtureSpec> = BTreeMap::new();
    for entry in file.dataset {
        let components = match (&entry.base, &entry.take) {
            (None, None) => entry.component,
            (Some(base), Some(take)) if entry.component.is_empty() => {
                let parent = out
                    .get(base)
                    .ok_or_else(|| Error::Config(format!("{}: unknown base {base}", entry.name)))?;
                take.iter()
                    .map(|&i| {
                        parent.components.get(i).cloned().ok_or_else(|| {
                            Error::Config(format!("{}: {base} has no component {i}", entry.name))
                        })
                    })
                    .collect::<Result<_>>()?
            }
            _ => {
                return Err(Error::Config(format!(
                    "{}: give either components or base + take",
                    entry.name
                )))
            }
        };
        let spec = MixtureSpec {
            name: entry.name.clone(),
            components,
        };
        spec.validate()?;
        out.insert(entry.name, spec);
    }
    Ok(out)
}

pub fn read_specs(path: &Path) -> Result<BTreeMap<String, MixtureSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_specs(&text)
}

/// The builtin mixtures: ids2, gaussian, ids2_22 and ids2_2k22.
pub fn builtin_specs() -> BTreeMap<String, MixtureSpec> {
    parse_specs(BUILTIN_SPEC_FILE).expect("checked-in mixture file is valid")
}

/// Every builtin dataset name, including the non-IID variants.
pub fn builtin_names() -> Vec<String> {
    let specs = builtin_specs();
    let mut names: Vec<String> = specs.keys().cloned().collect();
    for base in ["ids2", "gaussian"] {
        names.push(format!("{base}{NON_IID_SUFFIX}"));
    }
    names
}

/// A builtin dataset: its mixture and whether it is meant for the
/// cluster-per-client split.
#[derive(Clone, Debug, PartialEq)]
pub struct Builtin {
    pub name: String,
    pub spec: MixtureSpec,
    pub non_iid: bool,
}

pub fn lookup(name: &str) -> Result<Builtin> {
    let specs = builtin_specs();
    let (base, non_iid) = match name.strip_suffix(NON_IID_SUFFIX) {
        Some(base) => (base, true),
        None => (name, false),
    };
    let spec = specs
        .get(base)
        .filter(|_| !non_iid || matches!(base, "ids2" | "gaussian"))
        .ok_or_else(|| {
            Error::validation(format!(
                "unknown dataset {name:?}; builtins are: {}",
                builtin_names().join(", ")
            ))
        })?;
    Ok(Builtin {
        name: name.to_string(),
        spec: spec.clone(),
        non_iid,
    })
}

/// The same mixture resized to `n` points, component proportions kept
/// (largest-remainder rounding, every component at least one point).
pub fn scaled(spec: &MixtureSpec, n: usize) -> Result<MixtureSpec> {
    let k = spec.components.len();
    if n < k {
        return Err(Error::validation(format!(
            "cannot scale {} to {n} points: it has {k} components",
            spec.name
        )));
    }
    let total = spec.total() as f64;
    let exact: Vec<f64> = spec.components.iter().map(|c| c.size as f64 * n as f64 / total).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| (e.floor() as usize).max(1)).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let mut i = 0;
    while sizes.iter().sum::<usize>() < n {
        sizes[order[i % k]] += 1;
        i += 1;
    }
    while sizes.iter().sum::<usize>() > n {
        let largest = (0..k).max_by_key(|&c| sizes[c]).unwrap();
        sizes[largest] -= 1;
    }
    let mut out = spec.clone();
    out.name = format!("{}_{n}", spec.name);
    for (c, size) in out.components.iter_mut().zip(sizes) {
        c.size = size;
    }
    Ok(out)
}

/// Raw (unnormalized) samples and labels in component order.
pub fn sample_raw(spec: &MixtureSpec, rng: &mut SeededRng) -> Result<(Matrix, Vec<usize>)> {
    spec.validate()?;
    let d = spec.dim();
    let mut data = Vec::with_capacity(spec.total() * d);
    let mut labels = Vec::with_capacity(spec.total());
    for (k, c) in spec.components.iter().enumerate() {
        let factor = cholesky_factor(&c.covariance)?;
        let block = sample_gaussian(&c.mean, &factor, c.size, rng);
        data.extend_from_slice(block.as_slice());
        labels.extend(std::iter::repeat_n(k, c.size));
    }
    Ok((Matrix::from_flat(labels.len(), d, data)?, labels))
}

/// Draws the mixture and normalizes it to the unit cube.
pub fn generate(spec: &MixtureSpec, rng: &mut SeededRng) -> Result<PointSet> {
    let (raw, labels) = sample_raw(spec, rng)?;
    normalize_points(&raw, Some(labels), spec.name.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn histogram(p: &PointSet) -> Vec<usize> {
        p.ground_truth().unwrap().cluster_sizes()
    }

    #[test]
    fn builtin_counts_match_reference_sizes() {
        let specs = builtin_specs();
        let expect: [(&str, &[usize]); 4] = [
            ("ids2", &[2000, 400, 400, 200, 200]),
            ("gaussian", &[61, 1212, 606, 121]),
            ("ids2_22", &[200, 200]),
            ("ids2_2k22", &[2000, 200, 200]),
        ];
        for (name, sizes) in expect {
            let mut rng = SeededRng::new(1, 3);
            let p = generate(&specs[name], &mut rng).unwrap();
            assert_eq!(histogram(&p), sizes, "{name}");
            assert_eq!(p.len(), sizes.iter().sum::<usize>());
            assert_eq!(p.dim(), 2);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = &builtin_specs()["ids2"];
        let a = generate(spec, &mut SeededRng::new(7, 3)).unwrap();
        let b = generate(spec, &mut SeededRng::new(7, 3)).unwrap();
        assert_eq!(a.points(), b.points());
        let c = generate(spec, &mut SeededRng::new(8, 3)).unwrap();
        assert_ne!(a.points(), c.points());
    }

    #[test]
    fn derived_sets_reuse_parent_components() {
        let specs = builtin_specs();
        assert_eq!(specs["ids2_22"].components[0], specs["ids2"].components[3]);
        assert_eq!(specs["ids2_2k22"].components[0], specs["ids2"].components[0]);
    }

    #[test]
    fn scaling_keeps_proportions() {
        let spec = &builtin_specs()["ids2"];
        assert_eq!(scaled(spec, 1000).unwrap().sizes(), vec![625, 125, 125, 63, 62]);
        assert_eq!(scaled(spec, 3200).unwrap().sizes(), spec.sizes());
        assert_eq!(scaled(spec, 5).unwrap().sizes(), vec![1; 5]);
        assert!(scaled(spec, 4).is_err());
    }

    #[test]
    fn lookup_handles_non_iid_and_unknown() {
        assert!(lookup("ids2_non_iid").unwrap().non_iid);
        assert!(!lookup("gaussian").unwrap().non_iid);
        let err = lookup("digits").unwrap_err().to_string();
        assert!(err.contains("ids2_2k22"), "{err}");
        assert!(lookup("ids2_22_non_iid").is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = r#"
            version = 1
            [[dataset]]
            name = "x"
            [[dataset.component]]
            size = 3
            mean = [0.0]
            covariance = [[-1.0]]
        "#;
        assert!(parse_specs(bad).is_err());
        let dup = MixtureSpec {
            name: "dup".into(),
            components: vec![
                Component { size: 1, mean: vec![0.0], covariance: vec![vec![1.0]] },
                Component { size: 1, mean: vec![0.0], covariance: vec![vec![2.0]] },
            ],
        };
        assert!(dup.validate().is_err());
    }

    /// Average-linkage agglomeration, a deliberately plain reference clusterer.
    fn average_linkage(points: &Matrix, k: usize) -> Vec<usize> {
        let n = points.rows();
        let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut link: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| crate::model::euclidean(points.row(i), points.row(j))).collect())
            .collect();
        while clusters.len() > k {
            let (mut a, mut b, mut best) = (0, 1, f64::INFINITY);
            for i in 0..clusters.len() {
                for j in i + 1..clusters.len() {
                    if link[i][j] < best {
                        (a, b, best) = (i, j, link[i][j]);
                    }
                }
            }
            let (na, nb) = (clusters[a].len() as f64, clusters[b].len() as f64);
            for other in 0..clusters.len() {
                let merged = (na * link[a][other] + nb * link[b][other]) / (na + nb);
                link[a][other] = merged;
                link[other][a] = merged;
            }
            let moved = clusters.swap_remove(b);
            clusters[a].extend(moved);
            link.swap_remove(b);
            for row in &mut link {
                row.swap_remove(b);
            }
        }
        let mut out = vec![0; n];
        for (c, members) in clusters.iter().enumerate() {
            for &i in members {
                out[i] = c;
            }
        }
        out
    }

    #[test]
    fn ids2_is_recoverable_by_plain_agglomeration() {
        use rand::seq::index::sample;
        let data = generate(&builtin_specs()["ids2"], &mut SeededRng::new(0, 3)).unwrap();
        let mut rng = SeededRng::new(0, 99);
        let mut pick = sample(&mut rng, data.len(), 800).into_vec();
        pick.sort_unstable();
        let points = data.points().select_rows(&pick);
        let truth: Vec<usize> = pick.iter().map(|&i| data.labels().unwrap()[i]).collect();
        let pred = average_linkage(&points, 5);
        let ari = crate::metrics::ari(&crate::Partition::from_labels(&truth), &crate::Partition::from_labels(&pred)).unwrap();
        assert!(ari >= 0.9, "ari {ari}");
    }
}
