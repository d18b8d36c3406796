//! SAMME boosting over depth-2 trees.

use serde::{Deserialize, Serialize};

use super::forest::sorted_classes;
use super::tree::{argmax_label, fit_tree, Label, Node, TrainSet, TreeParams};
use crate::rng;

/// Error assigned to a perfect learner so its weight stays finite.
const MIN_ERROR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTree {
    pub alpha: f64,
    pub tree: Node,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosted {
    pub feature_names: Vec<String>,
    pub classes: Vec<Label>,
    pub seed: u64,
    pub learners: Vec<WeightedTree>,
    /// Prediction when no learner was accepted.
    pub fallback: Label,
}

impl Boosted {
    pub fn predict(&self, x: &[f64]) -> Label {
        if self.learners.is_empty() {
            return self.fallback;
        }
        let mut score = vec![0.0; self.classes.len()];
        for l in &self.learners {
            if let Ok(i) = self.classes.binary_search(&l.tree.predict(x)) {
                score[i] += l.alpha;
            }
        }
        argmax_label(&self.classes, &score)
    }
}

pub fn train_adaboost(
    x: &[Vec<f64>],
    y: &[Label],
    feature_names: &[String],
    rounds: usize,
    seed: u64,
) -> Boosted {
    let classes = sorted_classes(y);
    let n = x.len();
    let mut counts = vec![0.0; classes.len()];
    for l in y {
        counts[classes.binary_search(l).unwrap()] += 1.0;
    }
    let mut model = Boosted {
        feature_names: feature_names.to_vec(),
        classes: classes.clone(),
        seed,
        learners: Vec::new(),
        fallback: if classes.is_empty() { 2 } else { argmax_label(&classes, &counts) },
    };
    if classes.len() < 2 {
        log::warn!("single-class training set; boosting predicts {} everywhere", model.fallback);
        return model;
    }
    let k = classes.len() as f64;
    let data = TrainSet {
        x,
        y,
        feature_names,
        classes: &classes,
    };
    let params = TreeParams {
        max_depth: Some(2),
        min_samples_leaf: 1,
        max_features: None,
    };
    let rows: Vec<usize> = (0..n).collect();
    let mut w = vec![1.0 / n as f64; n];
    for round in 0..rounds as u64 {
        let tree = fit_tree(&data, &rows, &w, &params, &mut rng::indexed(seed, round));
        let miss: Vec<bool> = (0..n).map(|i| tree.predict(&x[i]) != y[i]).collect();
        let total: f64 = w.iter().sum();
        let err = miss.iter().zip(&w).filter(|(m, _)| **m).map(|(_, w)| w).sum::<f64>() / total;
        if err >= 1.0 - 1.0 / k {
            break;
        }
        let perfect = err <= MIN_ERROR;
        let e = err.max(MIN_ERROR);
        let alpha = ((1.0 - e) / e).ln() + (k - 1.0).ln();
        model.learners.push(WeightedTree { alpha, tree });
        if perfect {
            break;
        }
        for (wi, m) in w.iter_mut().zip(&miss) {
            if *m {
                *wi *= alpha.exp();
            }
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|wi| *wi /= s);
    }
    model
}
