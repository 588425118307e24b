//! Detection plus periodic classification, producing the event log.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::classify::{predict, smooth_labels, ModelError, TreeModel};
use crate::detect::{ClassVote, DetectError, Detector, DetectorConfig, Motion, TrackState, TrackUpdate, UpdateKind};
use crate::features::{extract_features, feature_order_hash, EventPatch, FeatureOptions, FeatureVector, N_FEATURES};
use crate::sim::{FiberLayout, WaterfallBlock};

/// Class reported when the smoothed prediction is not confident enough.
pub const UNCERTAIN: &str = "uncertain";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub detector: DetectorConfig,
    pub features: FeatureOptions,
    /// Seconds between reclassifications of a live track.
    pub classify_interval_s: f64,
    pub smoothing_window: usize,
    /// Smoothed confidence below this is reported as [`UNCERTAIN`].
    pub min_confidence: f64,
    /// Minimum spacing of `updated` records per event; a change of motion
    /// is always reported. 0 reports every block.
    pub update_interval_s: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            features: FeatureOptions::default(),
            classify_interval_s: 0.5,
            smoothing_window: 5,
            min_confidence: 0.5,
            update_interval_s: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Created,
    Updated,
    Ended,
    Classified,
}

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event: EventKind,
    pub id: u64,
    pub t_s: f64,
    pub x_start_m: f64,
    pub x_end_m: f64,
    pub centroid_m: f64,
    pub motion: Motion,
    pub velocity_mps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("classify_interval_s must be positive, update_interval_s nonnegative, smoothing_window and min_confidence in range")]
    Config,
}

#[derive(Clone, Debug, Default)]
struct ClassState {
    next_due_t_s: f64,
    shown: Option<(String, f64)>,
    last: Option<EventRecord>,
    last_emitted: Option<(f64, Motion)>,
}

/// Features computed for one track at one instant, with the raw
/// prediction when a model is loaded.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSample {
    pub id: u64,
    pub t_s: f64,
    pub features: FeatureVector,
    pub prediction: Option<(String, f64)>,
}

#[derive(Clone, Debug)]
pub struct Engine {
    detector: Detector,
    model: Option<TreeModel>,
    cfg: EngineConfig,
    pulse_rate_hz: f64,
    states: BTreeMap<u64, ClassState>,
    capture_features: bool,
    last_features: Vec<FeatureSample>,
}

impl Engine {
    /// Builds an engine. Without a model it only detects and tracks.
    pub fn new(layout: &FiberLayout, cfg: EngineConfig, model: Option<TreeModel>) -> Result<Self, EngineError> {
        if !(cfg.classify_interval_s > 0.0)
            || cfg.smoothing_window == 0
            || !(0.0..=1.0).contains(&cfg.min_confidence)
            || !(cfg.update_interval_s >= 0.0 && cfg.update_interval_s.is_finite())
        {
            return Err(EngineError::Config);
        }
        if let Some(m) = &model {
            m.validate()?;
            let hash = feature_order_hash();
            if m.feature_order_hash != hash {
                return Err(ModelError::HashMismatch { expected: m.feature_order_hash.clone(), got: hash }.into());
            }
            if m.n_features != N_FEATURES {
                return Err(ModelError::Width { expected: N_FEATURES, got: m.n_features }.into());
            }
        }
        Ok(Self {
            detector: Detector::new(layout, cfg.detector.clone())?,
            model,
            cfg,
            pulse_rate_hz: layout.pulse_rate_hz(),
            states: BTreeMap::new(),
            capture_features: false,
            last_features: Vec::new(),
        })
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn model(&self) -> Option<&TreeModel> {
        self.model.as_ref()
    }

    /// Computes features on the classification schedule even without a
    /// model, for building training sets.
    pub fn set_feature_capture(&mut self, on: bool) {
        self.capture_features = on;
    }

    /// Features (and raw predictions) computed while processing the last
    /// block.
    pub fn last_features(&self) -> &[FeatureSample] {
        &self.last_features
    }

    /// Latest record of every confirmed live event, by id.
    pub fn live_events(&self) -> Vec<EventRecord> {
        self.states.values().filter_map(|s| s.last.clone()).collect()
    }

    /// Processes one block and returns the records it produced, in log
    /// order: detector notifications first, then label changes.
    pub fn process_block(&mut self, block: &WaterfallBlock) -> Result<Vec<EventRecord>, EngineError> {
        let updates = self.detector.process_block(block)?;
        let t_s = block.t0_s() + block.n_traces() as f64 / self.pulse_rate_hz;
        let mut out = Vec::with_capacity(updates.len());
        for u in &updates {
            let state = self.states.entry(u.id).or_default();
            if u.kind == UpdateKind::Created {
                state.next_due_t_s = f64::NEG_INFINITY;
            }
            let rec = record(u, state.shown.as_ref());
            let emit = match (u.kind, state.last_emitted) {
                (UpdateKind::Updated, Some((t, motion))) => {
                    // 1e-9 absorbs block-time rounding
                    u.motion != motion || u.t_s + 1e-9 >= t + self.cfg.update_interval_s
                }
                _ => true,
            };
            if u.kind == UpdateKind::Ended {
                self.states.remove(&u.id);
            } else {
                state.last = Some(rec.clone());
                if emit {
                    state.last_emitted = Some((u.t_s, u.motion));
                }
            }
            if emit {
                out.push(rec);
            }
        }
        self.last_features.clear();
        if self.model.is_some() || self.capture_features {
            self.classify_tracks(t_s, &mut out);
        }
        Ok(out)
    }

    fn classify_tracks(&mut self, t_s: f64, out: &mut Vec<EventRecord>) {
        let ids: Vec<u64> =
            self.detector.tracks().iter().filter(|t| t.state == TrackState::Confirmed).map(|t| t.id).collect();
        for id in ids {
            let Some(state) = self.states.get_mut(&id) else { continue };
            // 1e-9 absorbs block-time rounding
            if t_s + 1e-9 < state.next_due_t_s {
                continue;
            }
            let track = self.detector.track(id).expect("id taken from live tracks");
            let Some(patch) = EventPatch::from_track(track, t_s, self.cfg.features.window_s, self.pulse_rate_hz) else {
                continue;
            };
            let Ok(features) = extract_features(&patch, track, &self.cfg.features) else { continue };
            state.next_due_t_s = t_s + self.cfg.classify_interval_s;
            let prediction = self.model.as_ref().and_then(|m| predict(m, &features).ok());
            self.last_features.push(FeatureSample {
                id,
                t_s,
                features,
                prediction: prediction.as_ref().map(|p| (p.label.clone(), p.confidence)),
            });
            let Some(p) = prediction else { continue };

            let track = self.detector.track_mut(id).expect("id taken from live tracks");
            track.class_history.push(ClassVote { t_s, label: p.label, confidence: p.confidence });
            let labels: Vec<&str> = track.class_history.iter().map(|v| v.label.as_str()).collect();
            let smoothed = smooth_labels(&labels, self.cfg.smoothing_window).expect("history just pushed");
            let recent = &track.class_history[track.class_history.len().saturating_sub(self.cfg.smoothing_window)..];
            let votes: Vec<f64> = recent.iter().filter(|v| v.label == smoothed).map(|v| v.confidence).collect();
            let confidence = votes.iter().sum::<f64>() / votes.len() as f64;
            let shown = String::from(if confidence < self.cfg.min_confidence { UNCERTAIN } else { smoothed });
            let changed = state.shown.as_ref().map(|s| &s.0) != Some(&shown);
            state.shown = Some((shown.clone(), confidence));
            if !changed {
                continue;
            }
            let track = self.detector.track(id).expect("id taken from live tracks");
            let (x_start_m, x_end_m) = track.span_m();
            let rec = EventRecord {
                event: EventKind::Classified,
                id,
                t_s,
                x_start_m,
                x_end_m,
                centroid_m: track.centroid_m(),
                motion: track.motion,
                velocity_mps: track.velocity_mps,
                class: Some(shown),
                confidence: Some(confidence),
            };
            state.last = Some(rec.clone());
            out.push(rec);
        }
    }
}

fn record(u: &TrackUpdate, shown: Option<&(String, f64)>) -> EventRecord {
    EventRecord {
        event: match u.kind {
            UpdateKind::Created => EventKind::Created,
            UpdateKind::Updated => EventKind::Updated,
            UpdateKind::Ended => EventKind::Ended,
        },
        id: u.id,
        t_s: u.t_s,
        x_start_m: u.x_start_m,
        x_end_m: u.x_end_m,
        centroid_m: u.centroid_m,
        motion: u.motion,
        velocity_mps: u.velocity_mps,
        class: shown.map(|s| s.0.clone()),
        confidence: shown.map(|s| s.1),
    }
}
