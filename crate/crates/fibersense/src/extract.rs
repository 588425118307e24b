//! Training rows from recordings and ground-truth label spans.

use std::path::Path;

use fibersense_core::classify::{DatasetError, LabeledDataset};
use fibersense_core::engine::{Engine, EngineConfig, EngineError};
use fibersense_core::sim::{FiberLayout, LabelSpan, WaterfallBlock};

use crate::jsonl::FeatureRecord;
use crate::potd::{FormatError, PotdReader};

/// Runs the engine in feature-capture mode and labels each feature window
/// whose track centroid lies inside a span's zone and whose whole window
/// lies inside the span's active interval. Unmatched windows are skipped.
pub struct Extractor {
    engine: Engine,
    labels: Vec<LabelSpan>,
    window_s: f64,
}

impl Extractor {
    pub fn new(layout: &FiberLayout, cfg: EngineConfig, labels: Vec<LabelSpan>) -> Result<Self, EngineError> {
        let window_s = cfg.features.window_s;
        let mut engine = Engine::new(layout, cfg, None)?;
        engine.set_feature_capture(true);
        Ok(Self { engine, labels, window_s })
    }

    pub fn push_block(&mut self, block: &WaterfallBlock) -> Result<Vec<FeatureRecord>, EngineError> {
        self.engine.process_block(block)?;
        let mut out = Vec::new();
        for s in self.engine.last_features() {
            let Some(&(_, centroid)) = self.engine.detector().track(s.id).and_then(|t| t.centroid_history.back())
            else {
                continue;
            };
            let span = self.labels.iter().find(|l| {
                centroid >= l.x_start_m
                    && centroid < l.x_end_m
                    && s.t_s - self.window_s >= l.t_start_s - 1e-9
                    && s.t_s <= l.t_end_s + 1e-9
            });
            if let Some(span) = span {
                out.push(FeatureRecord {
                    features: s.features,
                    label: span.class.as_str().into(),
                    source_event_id: s.id,
                    t_s: s.t_s,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

pub fn extract_file(
    potd: &Path,
    labels: Vec<LabelSpan>,
    layout: &FiberLayout,
    cfg: EngineConfig,
    block_traces: usize,
) -> Result<Vec<FeatureRecord>, ExtractError> {
    let mut reader = PotdReader::open(potd)?;
    reader.check_layout(layout)?;
    let mut ex = Extractor::new(layout, cfg, labels)?;
    let mut out = Vec::new();
    while let Some(block) = reader.read_block(block_traces)? {
        out.extend(ex.push_block(&block)?);
    }
    Ok(out)
}

/// A training set over the standard feature order.
pub fn dataset_from_records(records: &[FeatureRecord]) -> Result<LabeledDataset, DatasetError> {
    let mut d = LabeledDataset::for_feature_vectors();
    for r in records {
        d.push_vector(&r.features, r.label.clone())?;
    }
    Ok(d)
}
