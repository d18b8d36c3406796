//! Worst-case accuracy baseline: the lowest per-band accuracy of a model,
//! cut into three classes by two fitted thresholds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tree::Label;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signals::{DistanceAssignment, MeasurementSet};

/// Feature name under which the baseline reads its scalar.
pub const WORST_CASE_FEATURE: &str = "worst_case_accuracy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBaseline {
    pub t1: f64,
    /// `None` means no value reaches class 3.
    pub t2: Option<f64>,
}

impl ThresholdBaseline {
    /// `s < t1` is 1, `t1 <= s < t2` is 2, otherwise 3.
    pub fn predict(&self, s: f64) -> Label {
        if s < self.t1 {
            1
        } else if self.t2.is_none_or(|t2| s < t2) {
            2
        } else {
            3
        }
    }
}

/// Minimum over unit-width distance bins of the mean correctness.
/// Every measured row whose test image has a distance contributes.
pub fn worst_case_scalars<T: Scalar>(
    measurements: &MeasurementSet<T>,
    distances: &DistanceAssignment,
) -> Result<BTreeMap<String, f64>> {
    let mut bands: BTreeMap<&str, BTreeMap<i64, (u64, u64)>> = BTreeMap::new();
    for m in measurements.rows() {
        let Some(d) = distances.get(&m.test_id) else {
            continue;
        };
        let correct = m.correct.ok_or_else(|| {
            Error::Data(format!(
                "measurement {}/{}/{} has no correctness flag",
                m.model_id, m.test_id, m.position
            ))
        })?;
        let e = bands
            .entry(&m.model_id)
            .or_default()
            .entry(d.floor() as i64)
            .or_default();
        e.0 += correct as u64;
        e.1 += 1;
    }
    Ok(bands
        .into_iter()
        .map(|(model, b)| {
            let worst = b
                .values()
                .map(|&(hit, n)| hit as f64 / n as f64)
                .fold(f64::INFINITY, f64::min);
            (model.to_string(), worst)
        })
        .collect())
}

/// Exhaustive search over thresholds drawn from the observed scalars
/// (plus an open upper end) maximizing agreement with `labels`.
/// Ties keep the first pair in ascending `(t1, t2)` order.
pub fn fit_thresholds(scalars: &[f64], labels: &[Label]) -> Result<ThresholdBaseline> {
    if scalars.len() != labels.len() || scalars.is_empty() {
        return Err(Error::invalid("baseline needs equally many scalars and labels, at least one"));
    }
    let mut cuts: Vec<f64> = scalars.to_vec();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut cand: Vec<Option<f64>> = cuts.iter().copied().map(Some).collect();
    cand.push(None);
    let mut best: Option<(usize, ThresholdBaseline)> = None;
    for (i, t1) in cuts.iter().enumerate() {
        for t2 in &cand[i + 1..] {
            let m = ThresholdBaseline { t1: *t1, t2: *t2 };
            let hits = scalars
                .iter()
                .zip(labels)
                .filter(|(s, l)| m.predict(**s) == **l)
                .count();
            if best.as_ref().is_none_or(|(h, _)| hits > *h) {
                best = Some((hits, m));
            }
        }
    }
    Ok(best.expect("at least one threshold pair").1)
}
