//! Model measurements, semantic distances of testing images, and pairwise-difference point clouds.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::io;
use crate::ontology::Ontology;
use crate::scalar::Scalar;
use crate::search::{require_aligned, search_keywords, CompositionManifest};

/// Distance given to a testing image whose background shares a keyword with its target.
/// Keeps composites apart from the unmodified target, which sits at 0.
pub const SHARED_KEYWORD_DISTANCE: f64 = 0.5;

/// One line of a measurements file: either a scalar `value` or a `vector` to reduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMeasurement {
    pub model_id: String,
    pub test_id: String,
    pub position: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

pub fn load_raw_measurements(path: &Path) -> Result<Vec<RawMeasurement>> {
    io::read_jsonl(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    #[default]
    Max,
    Mean,
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Modality::Max),
            "mean" => Ok(Modality::Mean),
            _ => Err(Error::invalid(format!("unknown modality {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement<T> {
    pub model_id: String,
    pub test_id: String,
    pub position: String,
    pub value: T,
    pub correct: Option<bool>,
}

/// Reduced measurements indexed by `(model, test, position)`.
#[derive(Debug, Clone)]
pub struct MeasurementSet<T> {
    rows: Vec<Measurement<T>>,
    index: HashMap<(String, String, String), usize>,
}

impl<T: Scalar> MeasurementSet<T> {
    pub fn rows(&self) -> &[Measurement<T>] {
        &self.rows
    }

    pub fn get(&self, model_id: &str, test_id: &str, position: &str) -> Option<&Measurement<T>> {
        self.index
            .get(&(model_id.to_string(), test_id.to_string(), position.to_string()))
            .map(|&i| &self.rows[i])
    }

    pub fn models(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|m| m.model_id.as_str()).collect()
    }

    pub fn positions(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|m| m.position.as_str()).collect()
    }
}

/// Reduces vector rows with `modality`; scalar rows pass through.
pub fn reduce_measurements<T: Scalar>(
    raw: impl IntoIterator<Item = RawMeasurement>,
    modality: Modality,
) -> Result<MeasurementSet<T>> {
    let mut rows = Vec::new();
    let mut index = HashMap::new();
    for r in raw {
        let value = match (r.value, r.vector.as_deref()) {
            (Some(v), None) => v,
            (None, Some([])) => {
                return Err(Error::Data(format!(
                    "empty vector for {}/{}/{}",
                    r.model_id, r.test_id, r.position
                )))
            }
            (None, Some(v)) => match modality {
                Modality::Max => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Modality::Mean => v.iter().sum::<f64>() / v.len() as f64,
            },
            _ => {
                return Err(Error::Data(format!(
                    "{}/{}/{} needs exactly one of value or vector",
                    r.model_id, r.test_id, r.position
                )))
            }
        };
        if !value.is_finite() || r.vector.as_ref().is_some_and(|v| v.iter().any(|x| x.is_nan())) {
            return Err(Error::Data(format!(
                "non-finite measurement for {}/{}/{}",
                r.model_id, r.test_id, r.position
            )));
        }
        let key = (r.model_id.clone(), r.test_id.clone(), r.position.clone());
        if index.insert(key, rows.len()).is_some() {
            return Err(Error::DuplicateMeasurement {
                model_id: r.model_id,
                test_id: r.test_id,
                position: r.position,
            });
        }
        rows.push(Measurement {
            model_id: r.model_id,
            test_id: r.test_id,
            position: r.position,
            value: T::of(value),
            correct: r.correct,
        });
    }
    Ok(MeasurementSet { rows, index })
}

/// Semantic distance of every testing image (and each target, at 0) from its target.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistanceAssignment {
    pub distances: BTreeMap<String, f64>,
}

impl DistanceAssignment {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.distances.get(id).copied()
    }

    /// Copies distances into the manifest rows.
    pub fn annotate(&self, manifest: &CompositionManifest) -> CompositionManifest {
        let mut out = manifest.clone();
        for r in &mut out.rows {
            r.distance = self.get(&r.test_id);
        }
        out
    }

    /// Reads distances back from an annotated manifest; targets get 0.
    pub fn from_manifest(manifest: &CompositionManifest) -> Result<DistanceAssignment> {
        let mut distances = BTreeMap::new();
        for r in &manifest.rows {
            let d = r
                .distance
                .ok_or_else(|| Error::Data(format!("row {} has no distance", r.test_id)))?;
            distances.insert(r.test_id.clone(), d);
            distances.insert(r.target_id.clone(), 0.0);
        }
        Ok(DistanceAssignment { distances })
    }
}

/// Distance from a target to each of its testing images:
/// the minimum over search-keyword / background-keyword pairs of
/// `hops + (1 - aggregate)`, floored at [`SHARED_KEYWORD_DISTANCE`];
/// `max_level + 1` when no pair is connected.
pub fn assign_distances(
    corpus: &Corpus,
    onto: &Ontology,
    manifest: &CompositionManifest,
    max_level: usize,
) -> Result<DistanceAssignment> {
    require_aligned(corpus, onto)?;
    let groups: Vec<_> = manifest.by_target().into_iter().collect();
    let per_target: Vec<Vec<(String, f64)>> = groups
        .par_iter()
        .map(|(target, rows)| {
            let trees = search_keywords(corpus, target)?
                .into_iter()
                .map(|k| onto.paths_from(k))
                .collect::<Result<Vec<_>>>()?;
            let mut out = vec![(target.to_string(), 0.0)];
            for r in rows {
                let bg = corpus.keyword_set(&r.background_id)?;
                let best = trees
                    .iter()
                    .flat_map(|t| bg.iter().filter_map(|&k| t.cost(k)))
                    .map(|(hops, agg)| hops as f64 + (1.0 - agg))
                    .fold(f64::INFINITY, f64::min);
                let d = if best.is_finite() {
                    best.max(SHARED_KEYWORD_DISTANCE)
                } else {
                    (max_level + 1) as f64
                };
                out.push((r.test_id.clone(), d));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(DistanceAssignment {
        distances: per_target.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dif {
    #[default]
    Subtract,
    Absdiff,
}

impl Dif {
    pub fn apply<T: Scalar>(self, a: T, b: T) -> T {
        match self {
            Dif::Subtract => a - b,
            Dif::Absdiff => (a - b).abs(),
        }
    }
}

impl std::str::FromStr for Dif {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subtract" => Ok(Dif::Subtract),
            "absdiff" => Ok(Dif::Absdiff),
            _ => Err(Error::invalid(format!("unknown dif mode {s:?}"))),
        }
    }
}

/// Pairwise measurement differences placed at `(d_a, d_b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct PointCloud<T> {
    pub model_id: String,
    pub position: String,
    pub dif: Dif,
    pub d_max: T,
    /// `[d_a, d_b, v]` triples. Each `(a, b)` point is immediately followed by its `(b, a)` partner.
    pub points: Vec<[T; 3]>,
}

impl<T: Scalar> PointCloud<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

/// Builds the cloud of one `(model, position)` over every target in the manifest.
///
/// Each target and its `n` testing images give `n(n+1)` ordered pairs.
pub fn build_point_cloud<T: Scalar>(
    measurements: &MeasurementSet<T>,
    distances: &DistanceAssignment,
    manifest: &CompositionManifest,
    model_id: &str,
    position: &str,
    dif: Dif,
    d_max: Option<T>,
) -> Result<PointCloud<T>> {
    let mut points = Vec::new();
    let mut max_seen = T::zero();
    for (target, rows) in manifest.by_target() {
        let images: Vec<&str> = std::iter::once(target)
            .chain(rows.iter().map(|r| r.test_id.as_str()))
            .collect();
        let mut located = Vec::with_capacity(images.len());
        for id in images {
            let m = measurements.get(model_id, id, position).ok_or_else(|| {
                Error::MissingMeasurement {
                    model_id: model_id.to_string(),
                    test_id: id.to_string(),
                    position: position.to_string(),
                }
            })?;
            let d = if id == target {
                T::zero()
            } else {
                T::of(distances.get(id).ok_or_else(|| {
                    Error::Data(format!("no semantic distance for {id}"))
                })?)
            };
            max_seen = max_seen.max(d);
            located.push((d, m.value));
        }
        for (i, &(da, sa)) in located.iter().enumerate() {
            for &(db, sb) in &located[i + 1..] {
                points.push([da, db, dif.apply(sa, sb)]);
                points.push([db, da, dif.apply(sb, sa)]);
            }
        }
    }
    Ok(PointCloud {
        model_id: model_id.to_string(),
        position: position.to_string(),
        dif,
        d_max: d_max.unwrap_or(max_seen),
        points,
    })
}

/// Clouds for every `(model, position)` present in `measurements`, in that order.
pub fn build_point_clouds<T: Scalar>(
    measurements: &MeasurementSet<T>,
    distances: &DistanceAssignment,
    manifest: &CompositionManifest,
    dif: Dif,
    d_max: Option<T>,
) -> Result<Vec<PointCloud<T>>> {
    let positions = measurements.positions();
    let jobs: Vec<(&str, &str)> = measurements
        .models()
        .into_iter()
        .flat_map(|m| positions.iter().map(move |&p| (m, p)))
        .collect();
    jobs.par_iter()
        .map(|&(m, p)| build_point_cloud(measurements, distances, manifest, m, p, dif, d_max))
        .collect()
}
