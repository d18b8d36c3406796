//! Bagged CART forest.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{argmax_label, fit_tree, Label, Node, TrainSet, TreeParams};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub feature_names: Vec<String>,
    pub classes: Vec<Label>,
    pub seed: u64,
    pub trees: Vec<Node>,
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> Label {
        let mut votes = vec![0.0; self.classes.len()];
        for t in &self.trees {
            let l = t.predict(x);
            if let Ok(i) = self.classes.binary_search(&l) {
                votes[i] += 1.0;
            }
        }
        argmax_label(&self.classes, &votes)
    }
}

pub(crate) fn sorted_classes(y: &[Label]) -> Vec<Label> {
    let mut c = y.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

/// Random forest: each tree sees a bootstrap sample and `round(sqrt(F))`
/// candidate features per split, and stops at purity or leaves of 2.
pub fn train_random_forest(
    x: &[Vec<f64>],
    y: &[Label],
    feature_names: &[String],
    trees: usize,
    seed: u64,
) -> Forest {
    let classes = sorted_classes(y);
    let mut forest = Forest {
        feature_names: feature_names.to_vec(),
        classes: classes.clone(),
        seed,
        trees: Vec::new(),
    };
    if classes.len() < 2 {
        if let Some(&only) = classes.first() {
            log::warn!("single-class training set; forest predicts {only} everywhere");
            forest.trees.push(Node::Leaf { label: only });
        }
        return forest;
    }
    let data = TrainSet {
        x,
        y,
        feature_names,
        classes: &classes,
    };
    let n = x.len();
    let params = TreeParams {
        max_depth: None,
        min_samples_leaf: 2,
        max_features: Some(((feature_names.len() as f64).sqrt().round() as usize).max(1)),
    };
    let weights = vec![1.0; n];
    forest.trees = (0..trees as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::indexed(seed, t);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            fit_tree(&data, &rows, &weights, &params, &mut rng)
        })
        .collect();
    forest
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn separable(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Label>) {
        let mut rng = rng::seeded(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            y.push(if a + 0.5 * b > 0.0 { 3 } else { 1 });
            x.push(vec![a, b]);
        }
        (x, y)
    }

    fn names() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn separable_training_accuracy() {
        let (x, y) = separable(200, 1);
        let f = train_random_forest(&x, &y, &names(), 100, 1);
        let hits = x.iter().zip(&y).filter(|(xi, yi)| f.predict(xi) == **yi).count();
        assert!(hits as f64 / 200.0 >= 0.99, "{hits}");
    }

    #[test]
    fn single_class_is_constant() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let f = train_random_forest(&x, &[2, 2], &names(), 10, 0);
        assert_eq!(f.trees, vec![Node::Leaf { label: 2 }]);
        assert_eq!(f.predict(&[5.0, 5.0]), 2);
    }

    #[test]
    fn deterministic_under_seed() {
        let (x, y) = separable(80, 4);
        let a = train_random_forest(&x, &y, &names(), 20, 9);
        let b = train_random_forest(&x, &y, &names(), 20, 9);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = train_random_forest(&x, &y, &names(), 20, 10);
        assert_ne!(a, c);
    }

    #[test]
    fn vote_ties_go_to_lowest_label() {
        let f = Forest {
            feature_names: names(),
            classes: vec![1, 2, 3],
            seed: 0,
            trees: vec![Node::Leaf { label: 3 }, Node::Leaf { label: 2 }],
        };
        assert_eq!(f.predict(&[0.0, 0.0]), 2);
    }
}
