//! Invariance assessors: features of variance matrices, tree ensembles and
//! a worst-case-accuracy baseline trained on human labels, plus evaluation.

pub mod agreement;
pub mod annotations;
pub mod baseline;
pub mod boost;
pub mod eval;
pub mod features;
pub mod forest;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use agreement::{cohen_kappa, fleiss_kappa, FleissKappa};
pub use annotations::{AnnotationRow, AnnotationSet, IrrReport};
pub use baseline::{fit_thresholds, worst_case_scalars, ThresholdBaseline, WORST_CASE_FEATURE};
pub use boost::{train_adaboost, Boosted};
pub use eval::{evaluate, evaluate_with, stratified_split, AssessorReport, EvalConfig, EvalReport};
pub use features::{extract_features, feature_vector, FeatureRow, FeatureTable, FeatureVector, FEATURE_NAMES};
pub use forest::{train_random_forest, Forest};
pub use tree::{Label, Node};

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssessorKind {
    RandomForest,
    Adaboost,
    ThresholdBaseline,
}

impl AssessorKind {
    pub const ALL: [AssessorKind; 3] = [
        AssessorKind::RandomForest,
        AssessorKind::Adaboost,
        AssessorKind::ThresholdBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AssessorKind::RandomForest => "random_forest",
            AssessorKind::Adaboost => "adaboost",
            AssessorKind::ThresholdBaseline => "threshold_baseline",
        }
    }
}

impl fmt::Display for AssessorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssessorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AssessorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown assessor kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub feature_names: Vec<String>,
    pub seed: u64,
    #[serde(flatten)]
    pub thresholds: ThresholdBaseline,
}

/// A trained assessor, serialized with a `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssessorModel {
    RandomForest(Forest),
    Adaboost(Boosted),
    ThresholdBaseline(BaselineModel),
}

impl AssessorModel {
    pub fn kind(&self) -> AssessorKind {
        match self {
            AssessorModel::RandomForest(_) => AssessorKind::RandomForest,
            AssessorModel::Adaboost(_) => AssessorKind::Adaboost,
            AssessorModel::ThresholdBaseline(_) => AssessorKind::ThresholdBaseline,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            AssessorModel::RandomForest(m) => &m.feature_names,
            AssessorModel::Adaboost(m) => &m.feature_names,
            AssessorModel::ThresholdBaseline(m) => &m.feature_names,
        }
    }

    /// Predicts from inputs laid out as [`AssessorModel::feature_names`].
    pub fn predict(&self, x: &[f64]) -> Label {
        match self {
            AssessorModel::RandomForest(m) => m.predict(x),
            AssessorModel::Adaboost(m) => m.predict(x),
            AssessorModel::ThresholdBaseline(m) => m.thresholds.predict(x[0]),
        }
    }

    /// Predictions for every model of a dataset.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<BTreeMap<String, Label>> {
        let inputs = ds.inputs(self.kind())?;
        if self.kind() != AssessorKind::ThresholdBaseline && ds.feature_names != self.feature_names() {
            return Err(Error::Data("feature layout differs from the trained assessor".into()));
        }
        Ok(ds
            .model_ids
            .iter()
            .zip(inputs)
            .map(|(m, x)| (m.clone(), self.predict(&x)))
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<AssessorModel> {
        io::read_json(path)
    }
}

/// Feature rows with labels, aligned by model id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub model_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Label>,
    /// Worst-case accuracy per model, for the baseline.
    pub worst_case: Option<Vec<f64>>,
}

impl Dataset {
    /// Joins features with labels. Models lacking either are skipped with a
    /// warning; a model lacking a worst-case scalar (when given) is an error.
    pub fn new(
        features: &FeatureTable,
        labels: &BTreeMap<String, Label>,
        worst_case: Option<&BTreeMap<String, f64>>,
    ) -> Result<Dataset> {
        let mut ds = Dataset {
            model_ids: Vec::new(),
            feature_names: features.names.clone(),
            x: Vec::new(),
            y: Vec::new(),
            worst_case: worst_case.map(|_| Vec::new()),
        };
        for row in &features.rows {
            let Some(&label) = labels.get(&row.model_id) else {
                log::warn!("model {} has no label; skipped", row.model_id);
                continue;
            };
            if !annotations::valid_label(label) {
                return Err(Error::invalid(format!("label {label} for {}", row.model_id)));
            }
            if let (Some(src), Some(dst)) = (worst_case, ds.worst_case.as_mut()) {
                let s = src.get(&row.model_id).ok_or_else(|| {
                    Error::Data(format!("no worst-case accuracy for {}", row.model_id))
                })?;
                dst.push(*s);
            }
            ds.model_ids.push(row.model_id.clone());
            ds.x.push(row.values.clone());
            ds.y.push(label);
        }
        for m in labels.keys() {
            if features.get(m).is_none() {
                log::warn!("labeled model {m} has no features; skipped");
            }
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Per-model inputs for an assessor kind.
    pub fn inputs(&self, kind: AssessorKind) -> Result<Vec<Vec<f64>>> {
        match kind {
            AssessorKind::ThresholdBaseline => Ok(self
                .worst_case
                .as_ref()
                .ok_or_else(|| Error::Data("baseline needs worst-case accuracies".into()))?
                .iter()
                .map(|&s| vec![s])
                .collect()),
            _ => Ok(self.x.clone()),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            model_ids: rows.iter().map(|&i| self.model_ids[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            x: rows.iter().map(|&i| self.x[i].clone()).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            worst_case: self.worst_case.as_ref().map(|w| rows.iter().map(|&i| w[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub trees: usize,
    pub rounds: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            trees: 100,
            rounds: 50,
            seed: 0,
        }
    }
}

pub fn train(kind: AssessorKind, ds: &Dataset, params: &TrainParams) -> Result<AssessorModel> {
    if ds.is_empty() {
        return Err(Error::Data("no labeled models to train on".into()));
    }
    Ok(match kind {
        AssessorKind::RandomForest => AssessorModel::RandomForest(train_random_forest(
            &ds.x,
            &ds.y,
            &ds.feature_names,
            params.trees,
            params.seed,
        )),
        AssessorKind::Adaboost => AssessorModel::Adaboost(train_adaboost(
            &ds.x,
            &ds.y,
            &ds.feature_names,
            params.rounds,
            params.seed,
        )),
        AssessorKind::ThresholdBaseline => {
            let s: Vec<f64> = ds.inputs(kind)?.into_iter().map(|v| v[0]).collect();
            AssessorModel::ThresholdBaseline(BaselineModel {
                feature_names: vec![WORST_CASE_FEATURE.to_string()],
                seed: params.seed,
                thresholds: fit_thresholds(&s, &ds.y)?,
            })
        }
    })
}
