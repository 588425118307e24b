//! CART training with the Gini criterion and leaf-count prediction.
//!
//! Candidate thresholds are midpoints between consecutive distinct values of
//! a feature. A row goes right when its value is strictly greater than the
//! threshold. Among equal gains the lower feature index wins, then the lower
//! threshold. Nodes are stored in pre-order with the root at index 0.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::features::{feature_order_hash, FeatureVector};

/// Gains at or below this are treated as no improvement.
pub const MIN_GAIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("impurity of an empty count vector")]
pub struct EmptyCounts;

/// Gini impurity `1 - sum p_i^2` of class counts.
pub fn gini(counts: &[u64]) -> Result<f64, EmptyCounts> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(EmptyCounts);
    }
    Ok(gini_nonempty(counts, total))
}

fn gini_nonempty(counts: &[u64], total: u64) -> f64 {
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t) * (c as f64 / t)).sum::<f64>()
}

/// Gini gain of splitting `parent` into `left` and `right`. Both children
/// must be nonempty.
pub fn split_gain(parent: &[u64], left: &[u64], right: &[u64]) -> f64 {
    let nl: u64 = left.iter().sum();
    let nr: u64 = right.iter().sum();
    let n = (nl + nr) as f64;
    gini_nonempty(parent, nl + nr)
        - (nl as f64 / n) * gini_nonempty(left, nl)
        - (nr as f64 / n) * gini_nonempty(right, nr)
}

/// Midpoint of two distinct values, kept strictly below `hi` so that `hi`
/// routes right.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) * 0.5;
    if m < hi {
        m
    } else {
        lo
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Best Gini split of the rows `idx` of `x` (class indices in `y`), or
/// `None` when no candidate gains more than [`MIN_GAIN`].
pub fn best_split(x: &[Vec<f64>], y: &[usize], n_classes: usize, idx: &[usize]) -> Option<Split> {
    if idx.len() < 2 {
        return None;
    }
    let n_features = x.get(idx[0]).map_or(0, Vec::len);
    let mut parent = vec![0u64; n_classes];
    for &i in idx {
        parent[y[i]] += 1;
    }
    let mut best: Option<Split> = None;
    let mut order: Vec<usize> = idx.to_vec();
    let mut left = vec![0u64; n_classes];
    let mut right = vec![0u64; n_classes];
    for f in 0..n_features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(&parent);
        for w in 0..order.len() - 1 {
            let i = order[w];
            left[y[i]] += 1;
            right[y[i]] -= 1;
            let (lo, hi) = (x[i][f], x[order[w + 1]][f]);
            if lo == hi {
                continue;
            }
            let gain = split_gain(&parent, &left, &right);
            if gain > MIN_GAIN && best.is_none_or(|b| gain > b.gain) {
                best = Some(Split { feature: f, threshold: midpoint(lo, hi), gain });
            }
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Recorded in the model for provenance; training itself is
    /// deterministic.
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self { max_depth: 6, min_leaf: 3, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub n_samples: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split { f: usize, thr: f64, l: usize, r: usize },
    Leaf { counts: Vec<u64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub classes: Vec<String>,
    pub feature_order_hash: String,
    pub n_features: usize,
    pub train_meta: TrainMeta,
    pub nodes: Vec<Node>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("model has no nodes")]
    Empty,
    #[error("model has no classes")]
    NoClasses,
    #[error("node {0} has a child index out of range")]
    ChildRange(usize),
    #[error("node {0} is reachable more than once or not at all")]
    NotATree(usize),
    #[error("node {node} splits on feature {f}, model has {n_features}")]
    FeatureRange { node: usize, f: usize, n_features: usize },
    #[error("node {0} has a non-finite threshold")]
    Threshold(usize),
    #[error("leaf {0} counts do not match the class list or are all zero")]
    LeafCounts(usize),
    #[error("tree depth {depth} exceeds max_depth {max_depth}")]
    Depth { depth: usize, max_depth: usize },
    #[error("feature order hash {got} does not match model hash {expected}")]
    HashMismatch { expected: String, got: String },
    #[error("input has {got} features, model expects {expected}")]
    Width { expected: usize, got: usize },
    #[error("input feature {0} is not finite")]
    NonFinite(usize),
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    Empty,
    #[error("dataset has {rows} rows, at least {needed} required")]
    TooFewRows { rows: usize, needed: usize },
    #[error("min_leaf and max_depth must be at least 1")]
    Params,
}

impl TreeModel {
    /// Checks the structural invariants: a single rooted tree with
    /// in-range indices, depth within `max_depth`, and usable leaves.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.nodes.is_empty() {
            return Err(ModelError::Empty);
        }
        if self.classes.is_empty() {
            return Err(ModelError::NoClasses);
        }
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, depth)) = stack.pop() {
            if seen[i] {
                return Err(ModelError::NotATree(i));
            }
            seen[i] = true;
            match &self.nodes[i] {
                Node::Split { f, thr, l, r } => {
                    if *l >= n || *r >= n {
                        return Err(ModelError::ChildRange(i));
                    }
                    if *f >= self.n_features {
                        return Err(ModelError::FeatureRange { node: i, f: *f, n_features: self.n_features });
                    }
                    if !thr.is_finite() {
                        return Err(ModelError::Threshold(i));
                    }
                    if depth + 1 > self.train_meta.max_depth {
                        return Err(ModelError::Depth { depth: depth + 1, max_depth: self.train_meta.max_depth });
                    }
                    stack.push((*r, depth + 1));
                    stack.push((*l, depth + 1));
                }
                Node::Leaf { counts } => {
                    if counts.len() != self.classes.len() || counts.iter().all(|&c| c == 0) {
                        return Err(ModelError::LeafCounts(i));
                    }
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(ModelError::NotATree(i)),
            None => Ok(()),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { l, r, .. } => 1 + go(nodes, *l).max(go(nodes, *r)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    /// Index of the leaf that `v` routes to. `v` must have been checked
    /// against the model width.
    pub fn leaf_index(&self, v: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { f, thr, l, r } => i = if v[*f] > *thr { *r } else { *l },
                Node::Leaf { .. } => return i,
            }
        }
    }

    /// Weighted Gini impurity of the leaves the rows of `data` fall into.
    pub fn training_impurity(&self, data: &LabeledDataset) -> f64 {
        let mut per_leaf: Vec<Vec<u64>> = vec![vec![0; self.classes.len()]; self.nodes.len()];
        for row in data.rows() {
            let leaf = self.leaf_index(&row.features);
            if let Some(c) = self.classes.iter().position(|c| *c == row.label) {
                per_leaf[leaf][c] += 1;
            }
        }
        let n = data.len() as f64;
        per_leaf
            .iter()
            .filter_map(|counts| {
                let t: u64 = counts.iter().sum();
                gini(counts).ok().map(|g| t as f64 / n * g)
            })
            .sum()
    }
}

/// Trains a tree on `data`. A node becomes a leaf when it is pure, at
/// `max_depth`, when it holds fewer than `2 * min_leaf` rows, or when no
/// split gains anything. A single-class dataset yields a single leaf.
pub fn train_tree(data: &LabeledDataset, params: &TrainParams) -> Result<TreeModel, TrainError> {
    if params.min_leaf == 0 || params.max_depth == 0 {
        return Err(TrainError::Params);
    }
    if data.is_empty() {
        return Err(TrainError::Empty);
    }
    let needed = 2 * params.min_leaf;
    if data.len() < needed {
        return Err(TrainError::TooFewRows { rows: data.len(), needed });
    }
    let classes = data.classes();
    let x: Vec<Vec<f64>> = data.rows().iter().map(|r| r.features.clone()).collect();
    let y: Vec<usize> = data.rows().iter().map(|r| classes.iter().position(|c| *c == r.label).unwrap_or(0)).collect();
    let mut nodes = Vec::new();
    let idx: Vec<usize> = (0..x.len()).collect();
    grow(&x, &y, classes.len(), idx, 0, params, &mut nodes);
    Ok(TreeModel {
        classes,
        feature_order_hash: String::from(data.feature_order_hash()),
        n_features: data.n_features(),
        train_meta: TrainMeta {
            n_samples: data.len(),
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            seed: params.seed,
        },
        nodes,
    })
}

fn grow(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    idx: Vec<usize>,
    depth: usize,
    params: &TrainParams,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut counts = vec![0u64; n_classes];
    for &i in &idx {
        counts[y[i]] += 1;
    }
    let me = nodes.len();
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    let split = if pure || depth >= params.max_depth || idx.len() < 2 * params.min_leaf {
        None
    } else {
        best_split(x, y, n_classes, &idx)
    };
    let Some(s) = split else {
        nodes.push(Node::Leaf { counts });
        return me;
    };
    nodes.push(Node::Split { f: s.feature, thr: s.threshold, l: 0, r: 0 });
    let (li, ri): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| !(x[i][s.feature] > s.threshold));
    let l = grow(x, y, n_classes, li, depth + 1, params, nodes);
    let r = grow(x, y, n_classes, ri, depth + 1, params, nodes);
    nodes[me] = Node::Split { f: s.feature, thr: s.threshold, l, r };
    me
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub confidence: f64,
    /// Laplace-smoothed class probabilities in model class order.
    pub distribution: Vec<f64>,
}

/// Predicts from a standard feature vector, checking the model was trained
/// on the same feature order.
pub fn predict(model: &TreeModel, v: &FeatureVector) -> Result<Prediction, ModelError> {
    let hash = feature_order_hash();
    if model.feature_order_hash != hash {
        return Err(ModelError::HashMismatch { expected: model.feature_order_hash.clone(), got: hash });
    }
    predict_values(model, v.as_slice())
}

/// Predicts from a raw value slice of the model's width. The label is the
/// most probable class, ties going to the lexicographically first name.
pub fn predict_values(model: &TreeModel, v: &[f64]) -> Result<Prediction, ModelError> {
    if v.len() != model.n_features {
        return Err(ModelError::Width { expected: model.n_features, got: v.len() });
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(ModelError::NonFinite(i));
    }
    let Node::Leaf { counts } = &model.nodes[model.leaf_index(v)] else { unreachable!("leaf_index stops at a leaf") };
    let total: u64 = counts.iter().sum();
    let denom = (total + counts.len() as u64) as f64;
    let distribution: Vec<f64> = counts.iter().map(|&c| (c + 1) as f64 / denom).collect();
    let mut best = 0;
    for (i, &p) in distribution.iter().enumerate().skip(1) {
        let b = distribution[best];
        if p > b || (p == b && model.classes[i] < model.classes[best]) {
            best = i;
        }
    }
    Ok(Prediction { label: model.classes[best].clone(), confidence: distribution[best], distribution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn dataset(rows: &[(f64, &str)]) -> LabeledDataset {
        let mut d = LabeledDataset::new("h", 1);
        for (v, l) in rows {
            d.push(vec![*v], *l).unwrap();
        }
        d
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[10, 0, 0]), Ok(0.0));
        assert_eq!(gini(&[5, 5]), Ok(0.5));
        assert_eq!(gini(&[3, 1]), Ok(0.375));
        assert_eq!(gini(&[0, 0]), Err(EmptyCounts));
    }

    #[test]
    fn four_row_split() {
        let x = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
        let y = vec![0, 0, 1, 1];
        let s = best_split(&x, &y, 2, &[0, 1, 2, 3]).unwrap();
        assert_eq!((s.feature, s.threshold, s.gain), (0, 5.5, 0.5));
        assert_eq!(best_split(&x, &[0, 0, 0, 0], 2, &[0, 1, 2, 3]), None);
    }

    #[test]
    fn tie_prefers_lower_feature_then_threshold() {
        // both features separate perfectly; feature 0 must win
        let x = vec![vec![0.0, 5.0], vec![1.0, 6.0], vec![2.0, 7.0], vec![3.0, 8.0]];
        let s = best_split(&x, &[0, 0, 1, 1], 2, &[0, 1, 2, 3]).unwrap();
        assert_eq!((s.feature, s.threshold), (0, 1.5));
        // A, B, A: cutting at 0.5 or 1.5 isolates one A either way
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let s = best_split(&x, &[0, 1, 0], 2, &[0, 1, 2]).unwrap();
        assert_eq!(s.threshold, 0.5);
    }

    #[test]
    fn four_row_tree_is_depth_one() {
        let d = dataset(&[(0.0, "a"), (1.0, "a"), (10.0, "b"), (11.0, "b")]);
        let m = train_tree(&d, &TrainParams { min_leaf: 1, ..TrainParams::default() }).unwrap();
        assert_eq!(m.depth(), 1);
        assert_eq!(m.nodes.len(), 3);
        assert_eq!(m.training_impurity(&d), 0.0);
        m.validate().unwrap();
    }

    #[test]
    fn single_class_is_single_leaf() {
        let d = dataset(&[(0.0, "acoustic"); 30]);
        let m = train_tree(&d, &TrainParams::default()).unwrap();
        assert_eq!(m.nodes, [Node::Leaf { counts: vec![30] }]);
        let p = predict_values(&m, &[3.0]).unwrap();
        assert_eq!((p.label.as_str(), p.confidence), ("acoustic", 1.0));
    }

    #[test]
    fn laplace_smoothing() {
        let m = TreeModel {
            classes: vec!["acoustic".into(), "wind".into(), "vehicle".into()],
            feature_order_hash: "h".into(),
            n_features: 1,
            train_meta: TrainMeta { n_samples: 30, max_depth: 6, min_leaf: 3, seed: 0 },
            nodes: vec![Node::Leaf { counts: vec![30, 0, 0] }],
        };
        let p = predict_values(&m, &[0.0]).unwrap();
        assert_eq!(p.label, "acoustic");
        assert_eq!(p.confidence, 31.0 / 33.0);
        assert_eq!(p.distribution, [31.0 / 33.0, 1.0 / 33.0, 1.0 / 33.0]);
    }

    #[test]
    fn routing_and_label_ties() {
        let m = TreeModel {
            classes: vec!["wind".into(), "acoustic".into()],
            feature_order_hash: "h".into(),
            n_features: 8,
            train_meta: TrainMeta { n_samples: 4, max_depth: 6, min_leaf: 1, seed: 0 },
            nodes: vec![
                Node::Split { f: 7, thr: 90.0, l: 1, r: 2 },
                Node::Leaf { counts: vec![2, 0] },
                Node::Leaf { counts: vec![1, 1] },
            ],
        };
        m.validate().unwrap();
        let mut v = [0.0; 8];
        v[7] = 120.0;
        assert_eq!(m.leaf_index(&v), 2);
        // equal probabilities: lexicographically first name
        assert_eq!(predict_values(&m, &v).unwrap().label, "acoustic");
        v[7] = 90.0;
        assert_eq!(m.leaf_index(&v), 1);
        v[0] = f64::NAN;
        assert_eq!(predict_values(&m, &v), Err(ModelError::NonFinite(0)));
    }

    #[test]
    fn validate_rejects_broken_trees() {
        let base = TreeModel {
            classes: vec!["a".into()],
            feature_order_hash: "h".into(),
            n_features: 1,
            train_meta: TrainMeta { n_samples: 1, max_depth: 1, min_leaf: 1, seed: 0 },
            nodes: vec![
                Node::Split { f: 0, thr: 0.0, l: 1, r: 2 },
                Node::Leaf { counts: vec![1] },
                Node::Leaf { counts: vec![1] },
            ],
        };
        base.validate().unwrap();
        let mut m = base.clone();
        m.nodes[0] = Node::Split { f: 0, thr: 0.0, l: 1, r: 1 };
        assert!(matches!(m.validate(), Err(ModelError::NotATree(_))));
        let mut m = base.clone();
        m.nodes[0] = Node::Split { f: 0, thr: 0.0, l: 0, r: 2 };
        assert!(matches!(m.validate(), Err(ModelError::NotATree(0))));
        let mut m = base.clone();
        m.nodes[0] = Node::Split { f: 0, thr: 0.0, l: 1, r: 3 };
        assert_eq!(m.validate(), Err(ModelError::ChildRange(0)));
        let mut m = base.clone();
        m.nodes[2] = Node::Leaf { counts: vec![0] };
        assert_eq!(m.validate(), Err(ModelError::LeafCounts(2)));
        let mut m = base.clone();
        m.train_meta.max_depth = 0;
        assert!(matches!(m.validate(), Err(ModelError::Depth { .. })));
        let mut m = base;
        m.nodes[0] = Node::Split { f: 1, thr: 0.0, l: 1, r: 2 };
        assert!(matches!(m.validate(), Err(ModelError::FeatureRange { .. })));
    }

    #[test]
    fn midpoint_of_adjacent_floats_stays_below() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let m = midpoint(lo, hi);
        assert!(m < hi && m >= lo);
    }
}
