//! Repeated stratified train/test evaluation of assessors.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::agreement::cohen_kappa;
use super::annotations::IrrReport;
use super::tree::Label;
use super::{train, AssessorKind, Dataset, TrainParams};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub const MIN_MODELS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub repeats: usize,
    pub train_frac: f64,
    pub trees: usize,
    pub rounds: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            repeats: 10,
            train_frac: 2.0 / 3.0,
            trees: 100,
            rounds: 50,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        if !(self.train_frac > 0.0 && self.train_frac <= 1.0) {
            return Err(Error::invalid(format!("train_frac {} outside (0, 1]", self.train_frac)));
        }
        if self.trees == 0 || self.rounds == 0 {
            return Err(Error::invalid("trees and rounds must be at least 1"));
        }
        Ok(())
    }
}

/// Per class, shuffles that class's rows and sends `round(frac * count)` of
/// them (at least one) to training. Both halves come back sorted.
pub fn stratified_split(y: &[Label], train_frac: f64, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, &l) in y.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for rows in by_class.values_mut() {
        rows.shuffle(rng);
        let k = ((train_frac * rows.len() as f64).round() as usize).clamp(1, rows.len());
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessorReport {
    pub accuracy: Vec<f64>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub kappa: Vec<f64>,
    pub kappa_mean: f64,
    pub kappa_std: f64,
    /// Summed over repeats; rows are true labels 1..=3, columns predictions.
    pub confusion: [[u64; 3]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSummary {
    /// Cohen's kappa between the headline assessor and the labels, over repeats.
    pub mean: f64,
    pub std: f64,
    /// Agreement among the human annotators, when annotations were given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotators: Option<IrrReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub models: usize,
    pub repeats: usize,
    pub train_frac: f64,
    pub stratified: bool,
    pub seed: u64,
    /// Assessor whose numbers fill the top-level fields.
    pub headline: AssessorKind,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub kappa: KappaSummary,
    pub confusion: [[u64; 3]; 3],
    pub assessors: BTreeMap<AssessorKind, AssessorReport>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn check_repository(y: &[Label]) -> Result<()> {
    if y.len() < MIN_MODELS {
        return Err(Error::Data(format!(
            "evaluation needs at least {MIN_MODELS} labeled models, got {}",
            y.len()
        )));
    }
    for l in 1..=3 {
        if !y.contains(&l) {
            return Err(Error::Data(format!("no model carries label {l}")));
        }
    }
    Ok(())
}

/// Split of repeat `rep`; every stage that needs it derives the same one.
pub fn split_for(y: &[Label], cfg: &EvalConfig, rep: usize) -> (Vec<usize>, Vec<usize>) {
    let mut r = rng::stream(cfg.seed, &format!("split/{rep}"));
    stratified_split(y, cfg.train_frac, &mut r)
}

/// Evaluates a predictor `f(train_rows, test_rows, repeat_seed)` that returns
/// one label per test row. An empty test half (train_frac = 1) evaluates on
/// the training rows.
pub fn evaluate_with<F>(y: &[Label], cfg: &EvalConfig, f: F) -> Result<AssessorReport>
where
    F: Fn(&[usize], &[usize], u64) -> Result<Vec<Label>> + Sync,
{
    cfg.validate()?;
    check_repository(y)?;
    let runs: Vec<(f64, f64, [[u64; 3]; 3])> = (0..cfg.repeats)
        .into_par_iter()
        .map(|rep| {
            let (train, mut test) = split_for(y, cfg, rep);
            if test.is_empty() {
                test = train.clone();
            }
            let pred = f(&train, &test, rng::mix64(cfg.seed ^ rep as u64))?;
            if pred.len() != test.len() {
                return Err(Error::Data("predictor returned the wrong number of labels".into()));
            }
            let truth: Vec<Label> = test.iter().map(|&i| y[i]).collect();
            let mut confusion = [[0u64; 3]; 3];
            for (t, p) in truth.iter().zip(&pred) {
                if !(1..=3).contains(p) {
                    return Err(Error::Data(format!("predicted label {p} outside 1..=3")));
                }
                confusion[(t - 1) as usize][(p - 1) as usize] += 1;
            }
            let hits = truth.iter().zip(&pred).filter(|(t, p)| t == p).count();
            Ok((hits as f64 / truth.len() as f64, cohen_kappa(&truth, &pred)?, confusion))
        })
        .collect::<Result<_>>()?;
    let accuracy: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let kappa: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let mut confusion = [[0u64; 3]; 3];
    for (_, _, c) in &runs {
        for i in 0..3 {
            for j in 0..3 {
                confusion[i][j] += c[i][j];
            }
        }
    }
    let (accuracy_mean, accuracy_std) = mean_std(&accuracy);
    let (kappa_mean, kappa_std) = mean_std(&kappa);
    Ok(AssessorReport {
        accuracy,
        accuracy_mean,
        accuracy_std,
        kappa,
        kappa_mean,
        kappa_std,
        confusion,
    })
}

/// Trains and scores each assessor kind over the configured repeats.
pub fn evaluate(
    ds: &Dataset,
    cfg: &EvalConfig,
    kinds: &[AssessorKind],
    annotators: Option<IrrReport>,
) -> Result<EvalReport> {
    let headline = *kinds
        .first()
        .ok_or_else(|| Error::invalid("no assessor kinds to evaluate"))?;
    let mut assessors = BTreeMap::new();
    for &kind in kinds {
        let inputs = ds.inputs(kind)?;
        let report = evaluate_with(&ds.y, cfg, |train_rows, test_rows, seed| {
            let params = TrainParams {
                trees: cfg.trees,
                rounds: cfg.rounds,
                seed,
            };
            let model = train(kind, &ds.subset(train_rows), &params)?;
            Ok(test_rows.iter().map(|&i| model.predict(&inputs[i])).collect())
        })?;
        assessors.insert(kind, report);
    }
    let top = &assessors[&headline];
    Ok(EvalReport {
        models: ds.len(),
        repeats: cfg.repeats,
        train_frac: cfg.train_frac,
        stratified: true,
        seed: cfg.seed,
        headline,
        accuracy_mean: top.accuracy_mean,
        accuracy_std: top.accuracy_std,
        kappa: KappaSummary {
            mean: top.kappa_mean,
            std: top.kappa_std,
            annotators,
        },
        confusion: top.confusion,
        assessors,
    })
}
