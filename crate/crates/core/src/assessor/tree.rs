//! Weighted CART classification trees with Gini impurity.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// Class labels are small integers (1 = not invariant, 2 = borderline, 3 = invariant).
pub type Label = u8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        label: Label,
    },
    Split {
        feature: usize,
        feature_name: String,
        /// Samples with `x[feature] <= threshold` go left.
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn predict(&self, x: &[f64]) -> Label {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { label } => return *label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` considers all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

/// Training view shared by the ensemble learners.
pub struct TrainSet<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [Label],
    pub feature_names: &'a [String],
    /// Sorted distinct labels.
    pub classes: &'a [Label],
}

impl TrainSet<'_> {
    fn class_index(&self, l: Label) -> usize {
        self.classes.binary_search(&l).expect("label among classes")
    }
}

/// Heaviest class, ties to the lowest label.
pub(crate) fn argmax_label(classes: &[Label], counts: &[f64]) -> Label {
    let mut best = 0;
    for c in 1..counts.len() {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    classes[best]
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Grows a tree over `rows` (indices into the train set, repeats allowed)
/// with per-row `weights`.
pub fn fit_tree(
    data: &TrainSet<'_>,
    rows: &[usize],
    weights: &[f64],
    params: &TreeParams,
    rng: &mut Rng,
) -> Node {
    let mut rows = rows.to_vec();
    grow(data, &mut rows, weights, params, rng, 0)
}

fn grow(
    data: &TrainSet<'_>,
    rows: &mut [usize],
    weights: &[f64],
    params: &TreeParams,
    rng: &mut Rng,
    depth: usize,
) -> Node {
    let k = data.classes.len();
    let mut counts = vec![0.0; k];
    for &r in rows.iter() {
        counts[data.class_index(data.y[r])] += weights[r];
    }
    let total: f64 = counts.iter().sum();
    let leaf = Node::Leaf {
        label: argmax_label(data.classes, &counts),
    };
    let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
    if pure
        || params.max_depth.is_some_and(|d| depth >= d)
        || rows.len() < 2 * params.min_samples_leaf.max(1)
    {
        return leaf;
    }

    let n_features = data.x[0].len();
    let mut features: Vec<usize> = (0..n_features).collect();
    features.shuffle(rng);
    if let Some(m) = params.max_features {
        features.truncate(m.clamp(1, n_features));
    }

    let parent = gini(&counts, total) * total;
    let mut best: Option<Best> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for &f in &features {
        order.sort_by(|&a, &b| data.x[a][f].total_cmp(&data.x[b][f]));
        let mut left = vec![0.0; k];
        let mut left_w = 0.0;
        for pos in 0..order.len() - 1 {
            let r = order[pos];
            left[data.class_index(data.y[r])] += weights[r];
            left_w += weights[r];
            let (here, next) = (data.x[r][f], data.x[order[pos + 1]][f]);
            if here == next {
                continue;
            }
            let n_left = pos + 1;
            if n_left < params.min_samples_leaf || order.len() - n_left < params.min_samples_leaf {
                continue;
            }
            let right: Vec<f64> = counts.iter().zip(&left).map(|(t, l)| t - l).collect();
            let right_w = total - left_w;
            let score = gini(&left, left_w) * left_w + gini(&right, right_w) * right_w;
            if best.as_ref().is_none_or(|b| score < b.score) {
                let mut threshold = here + (next - here) / 2.0;
                if threshold >= next {
                    threshold = here;
                }
                best = Some(Best {
                    feature: f,
                    threshold,
                    score,
                });
            }
        }
    }

    let Some(best) = best.filter(|b| b.score < parent - 1e-12 * total.max(1.0)) else {
        return leaf;
    };
    let split = partition_in_place(rows, |&r| data.x[r][best.feature] <= best.threshold);
    let (l, r) = rows.split_at_mut(split);
    Node::Split {
        feature: best.feature,
        feature_name: data.feature_names[best.feature].clone(),
        threshold: best.threshold,
        left: Box::new(grow(data, l, weights, params, rng, depth + 1)),
        right: Box::new(grow(data, r, weights, params, rng, depth + 1)),
    }
}

/// Stable in-place partition; returns the count satisfying `pred`.
fn partition_in_place(rows: &mut [usize], pred: impl Fn(&usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|r| pred(r));
    let n = yes.len();
    for (slot, v) in rows.iter_mut().zip(yes.into_iter().chain(no)) {
        *slot = v;
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn learns_axis_split() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let y: Vec<Label> = (0..20).map(|i| if i < 10 { 1 } else { 3 }).collect();
        let names = names(2);
        let data = TrainSet {
            x: &x,
            y: &y,
            feature_names: &names,
            classes: &[1, 3],
        };
        let rows: Vec<usize> = (0..20).collect();
        let tree = fit_tree(&data, &rows, &[1.0; 20], &TreeParams::default(), &mut crate::rng::seeded(1));
        match &tree {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 9.5);
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert!((0..20).all(|i| tree.predict(&x[i]) == y[i]));
    }

    #[test]
    fn depth_limit_and_weights() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let y: Vec<Label> = vec![1, 2, 1, 2, 1, 2, 1, 2];
        let names = names(1);
        let data = TrainSet {
            x: &x,
            y: &y,
            feature_names: &names,
            classes: &[1, 2],
        };
        let rows: Vec<usize> = (0..8).collect();
        let p = TreeParams {
            max_depth: Some(2),
            ..TreeParams::default()
        };
        let t = fit_tree(&data, &rows, &[1.0; 8], &p, &mut crate::rng::seeded(0));
        assert!(t.depth() <= 2);
        // A heavy class-2 weight makes the root leaf predict 2 at depth 0.
        let p0 = TreeParams {
            max_depth: Some(0),
            ..TreeParams::default()
        };
        let w = [1.0, 5.0, 1.0, 5.0, 1.0, 5.0, 1.0, 5.0];
        assert_eq!(fit_tree(&data, &rows, &w, &p0, &mut crate::rng::seeded(0)), Node::Leaf { label: 2 });
        assert_eq!(
            fit_tree(&data, &rows, &[1.0; 8], &p0, &mut crate::rng::seeded(0)),
            Node::Leaf { label: 1 }
        );
    }

    #[test]
    fn min_leaf_respected() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y: Vec<Label> = vec![1, 2, 2, 2, 2];
        let names = names(1);
        let data = TrainSet {
            x: &x,
            y: &y,
            feature_names: &names,
            classes: &[1, 2],
        };
        let p = TreeParams {
            min_samples_leaf: 2,
            ..TreeParams::default()
        };
        let t = fit_tree(&data, &[0, 1, 2, 3, 4], &[1.0; 5], &p, &mut crate::rng::seeded(0));
        // The only pure cut isolates one sample, which min-leaf forbids.
        fn leaf_sizes(n: &Node, x: &[Vec<f64>], rows: &[usize], out: &mut Vec<usize>) {
            match n {
                Node::Leaf { .. } => out.push(rows.len()),
                Node::Split { feature, threshold, left, right, .. } => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&i| x[i][*feature] <= *threshold);
                    leaf_sizes(left, x, &l, out);
                    leaf_sizes(right, x, &r, out);
                }
            }
        }
        let mut sizes = Vec::new();
        leaf_sizes(&t, &x, &[0, 1, 2, 3, 4], &mut sizes);
        assert!(sizes.iter().all(|&s| s >= 2), "{sizes:?}");
    }
}
