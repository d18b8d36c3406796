//! Human invariance labels: one per (model, annotator), last write wins.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::agreement::{cohen_kappa, fleiss_kappa, FleissKappa};
use super::tree::Label;
use crate::error::{Error, Result};
use crate::io;

pub const LABEL_NAMES: [&str; 3] = ["not invariant", "borderline", "invariant"];

pub fn valid_label(l: Label) -> bool {
    (1..=3).contains(&l)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub model_id: String,
    pub annotator: String,
    pub label: Label,
    /// Milliseconds since the Unix epoch at which the label was recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationSet {
    rows: BTreeMap<(String, String), AnnotationRow>,
}

impl AnnotationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: impl IntoIterator<Item = AnnotationRow>) -> Result<Self> {
        let mut set = Self::new();
        for r in rows {
            set.insert(r)?;
        }
        Ok(set)
    }

    /// A missing file is an empty set.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::new());
        }
        Self::from_rows(io::read_jsonl::<AnnotationRow>(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_jsonl(path, self.rows.values())
    }

    /// Adds or replaces a label; returns the replaced row.
    pub fn insert(&mut self, row: AnnotationRow) -> Result<Option<AnnotationRow>> {
        if !valid_label(row.label) {
            return Err(Error::invalid(format!(
                "label {} for {} is not one of 1, 2, 3",
                row.label, row.model_id
            )));
        }
        Ok(self
            .rows
            .insert((row.model_id.clone(), row.annotator.clone()), row))
    }

    pub fn get(&self, model_id: &str, annotator: &str) -> Option<&AnnotationRow> {
        self.rows.get(&(model_id.to_string(), annotator.to_string()))
    }

    pub fn rows(&self) -> impl Iterator<Item = &AnnotationRow> {
        self.rows.values()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn annotators(&self) -> BTreeSet<&str> {
        self.rows.values().map(|r| r.annotator.as_str()).collect()
    }

    pub fn models(&self) -> BTreeSet<&str> {
        self.rows.values().map(|r| r.model_id.as_str()).collect()
    }

    fn by_annotator(&self) -> BTreeMap<&str, BTreeMap<&str, Label>> {
        let mut out: BTreeMap<&str, BTreeMap<&str, Label>> = BTreeMap::new();
        for r in self.rows.values() {
            out.entry(&r.annotator).or_default().insert(&r.model_id, r.label);
        }
        out
    }

    /// Majority label per model; any tie goes to 2.
    pub fn majority(&self) -> BTreeMap<String, Label> {
        let mut counts: BTreeMap<&str, [u32; 3]> = BTreeMap::new();
        for r in self.rows.values() {
            counts.entry(&r.model_id).or_default()[(r.label - 1) as usize] += 1;
        }
        counts
            .into_iter()
            .map(|(m, c)| {
                let top = *c.iter().max().unwrap();
                let winners: Vec<usize> = (0..3).filter(|&i| c[i] == top).collect();
                let label = if winners.len() == 1 { winners[0] as Label + 1 } else { 2 };
                (m.to_string(), label)
            })
            .collect()
    }

    /// Pairwise Cohen's kappa over shared models, and Fleiss' kappa over
    /// models every annotator labeled.
    pub fn irr(&self) -> IrrReport {
        let by = self.by_annotator();
        let names: Vec<&str> = by.keys().copied().collect();
        let mut pairwise = Vec::new();
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                let (la, lb): (Vec<Label>, Vec<Label>) = by[a]
                    .iter()
                    .filter_map(|(m, l)| by[b].get(m).map(|lb| (*l, *lb)))
                    .unzip();
                pairwise.push(PairKappa {
                    a: a.to_string(),
                    b: b.to_string(),
                    shared: la.len(),
                    kappa: cohen_kappa(&la, &lb).ok(),
                });
            }
        }
        let items: Vec<Vec<Label>> = self
            .models()
            .into_iter()
            .filter_map(|m| names.iter().map(|a| by[a].get(m).copied()).collect::<Option<Vec<_>>>())
            .collect();
        let fleiss = if names.len() >= 2 { fleiss_kappa(&items).ok() } else { None };
        IrrReport {
            annotators: names.iter().map(|s| s.to_string()).collect(),
            pairwise,
            fleiss_items: items.len(),
            fleiss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairKappa {
    pub a: String,
    pub b: String,
    pub shared: usize,
    /// `None` when the pair shares no model.
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrrReport {
    pub annotators: Vec<String>,
    pub pairwise: Vec<PairKappa>,
    pub fleiss_items: usize,
    /// `None` with fewer than two annotators or no fully labeled model.
    pub fleiss: Option<FleissKappa>,
}
