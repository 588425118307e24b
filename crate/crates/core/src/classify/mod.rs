//! Decision-tree classification of event feature vectors.

mod dataset;
mod tree;

pub use dataset::{DatasetError, LabeledDataset, LabeledRow};
pub use tree::{
    best_split, gini, midpoint, predict, predict_values, split_gain, train_tree, EmptyCounts, ModelError, Node,
    Prediction, Split, TrainError, TrainMeta, TrainParams, TreeModel, MIN_GAIN,
};

/// Number of recent predictions voted over by default.
pub const SMOOTHING_WINDOW: usize = 5;

/// Majority label over the last `window` entries of `history`. On a tie the
/// tied label seen most recently wins. Returns `None` for an empty history.
pub fn smooth_labels<S: AsRef<str>>(history: &[S], window: usize) -> Option<&str> {
    let recent = &history[history.len().saturating_sub(window.max(1))..];
    let mut best: Option<(&str, usize)> = None;
    // walking newest first, an older label only wins with a strictly higher
    // count
    for entry in recent.iter().rev() {
        let label = entry.as_ref();
        let count = recent.iter().filter(|e| e.as_ref() == label).count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((label, count));
        }
    }
    best.map(|(l, _)| l)
}
