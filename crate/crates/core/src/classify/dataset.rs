use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::features::{feature_order_hash, FeatureVector, N_FEATURES};
use crate::sim::EventClass;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub features: Vec<f64>,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("row has {got} features, dataset expects {expected}")]
    Width { expected: usize, got: usize },
    #[error("row feature order hash {got} differs from dataset hash {expected}")]
    HashMismatch { expected: String, got: String },
    #[error("row contains a non-finite feature")]
    NonFinite,
    #[error("empty label")]
    EmptyLabel,
}

/// Feature rows with labels, all sharing one feature order.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    feature_order_hash: String,
    n_features: usize,
    rows: Vec<LabeledRow>,
}

impl LabeledDataset {
    pub fn new(feature_order_hash: impl Into<String>, n_features: usize) -> Self {
        Self { feature_order_hash: feature_order_hash.into(), n_features, rows: Vec::new() }
    }

    /// An empty dataset over the standard [`FeatureVector`] layout.
    pub fn for_feature_vectors() -> Self {
        Self::new(feature_order_hash(), N_FEATURES)
    }

    pub fn feature_order_hash(&self) -> &str {
        &self.feature_order_hash
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn rows(&self) -> &[LabeledRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, features: Vec<f64>, label: impl Into<String>) -> Result<(), DatasetError> {
        let label = label.into();
        if features.len() != self.n_features {
            return Err(DatasetError::Width { expected: self.n_features, got: features.len() });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::NonFinite);
        }
        if label.is_empty() {
            return Err(DatasetError::EmptyLabel);
        }
        self.rows.push(LabeledRow { features, label });
        Ok(())
    }

    /// Adds a row that declares its own feature order, rejecting it when
    /// that order is not the dataset's.
    pub fn push_hashed(
        &mut self,
        hash: &str,
        features: Vec<f64>,
        label: impl Into<String>,
    ) -> Result<(), DatasetError> {
        if hash != self.feature_order_hash {
            return Err(DatasetError::HashMismatch {
                expected: self.feature_order_hash.clone(),
                got: hash.to_string(),
            });
        }
        self.push(features, label)
    }

    pub fn push_vector(&mut self, v: &FeatureVector, label: impl Into<String>) -> Result<(), DatasetError> {
        let hash = feature_order_hash();
        self.push_hashed(&hash, v.0.to_vec(), label)
    }

    /// Distinct labels: the event classes first in their canonical order,
    /// then any other labels sorted.
    pub fn classes(&self) -> Vec<String> {
        canonical_classes(self.rows.iter().map(|r| r.label.as_str()))
    }
}

pub(crate) fn canonical_classes<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut others: Vec<&str> = Vec::new();
    let mut known = [false; 3];
    for l in labels {
        match EventClass::ALL.iter().position(|c| c.as_str() == l) {
            Some(i) => known[i] = true,
            None => others.push(l),
        }
    }
    others.sort_unstable();
    others.dedup();
    let mut out: Vec<String> =
        EventClass::ALL.iter().zip(known).filter(|(_, k)| *k).map(|(c, _)| c.as_str().to_string()).collect();
    out.extend(others.into_iter().map(String::from));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn class_order() {
        let mut d = LabeledDataset::new("h", 1);
        for l in ["zeta", "vehicle", "alpha", "acoustic", "vehicle"] {
            d.push(vec![0.0], l).unwrap();
        }
        assert_eq!(d.classes(), ["acoustic", "vehicle", "alpha", "zeta"]);
    }

    #[test]
    fn rejects_bad_rows() {
        let mut d = LabeledDataset::new("h", 2);
        assert!(matches!(d.push(vec![0.0], "a"), Err(DatasetError::Width { .. })));
        assert_eq!(d.push(vec![0.0, f64::NAN], "a"), Err(DatasetError::NonFinite));
        assert!(matches!(d.push_hashed("g", vec![0.0, 0.0], "a"), Err(DatasetError::HashMismatch { .. })));
        assert!(d.is_empty());
    }
}
