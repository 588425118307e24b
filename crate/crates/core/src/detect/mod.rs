//! Streaming detection, localization and tracking of fiber events.
//!
//! Per block: energy per bin, z-score against a moving mean / moving standard
//! deviation background, hysteresis, clustering of active bins, greedy
//! association to tracks, and a least-squares velocity estimate. The
//! background is not updated under (dilated) active bins, so long events are
//! never absorbed into it.

mod activity;
mod background;
mod cluster;
mod energy;
mod track;

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use activity::{activity_scores, dilate, ActivityMap, WarmupError};
pub use background::{BackgroundModel, DimensionMismatch};
pub use cluster::{segment_active_bins, SpatialCluster};
pub use energy::{block_energy, block_energy_into};
pub use track::{
    least_squares_slope, Association, ClassVote, EventTrack, InsufficientHistory, Motion, TrackState, Tracker,
    HISTORY_LIMIT,
};

use crate::sim::{FiberLayout, WaterfallBlock};

/// Detector constants. All of them are configurable; the defaults are the
/// values the acceptance scenarios are tuned for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// EMA weight per block.
    pub alpha: f64,
    pub warmup_blocks: u32,
    /// Minimum standard deviation, energy units.
    pub sigma_floor: f64,
    /// Start each bin from a running mean instead of zero.
    pub warm_start: bool,
    pub k_on: f64,
    pub k_off: f64,
    pub gap_bins: usize,
    pub min_width_bins: usize,
    pub assoc_max_m: f64,
    pub timeout_blocks: u32,
    pub confirm_blocks: u32,
    pub v_min_mps: f64,
    pub vel_window: usize,
    /// Consecutive estimates needed to switch between stationary and moving.
    pub motion_hold: u32,
    /// Length of each track's patch buffer.
    pub patch_seconds: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            warmup_blocks: 50,
            sigma_floor: 1e-6,
            warm_start: true,
            k_on: 5.0,
            k_off: 3.0,
            gap_bins: 3,
            min_width_bins: 2,
            assoc_max_m: 10.0,
            timeout_blocks: 10,
            confirm_blocks: 3,
            v_min_mps: 0.5,
            vel_window: 10,
            motion_hold: 2,
            patch_seconds: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{field} is out of range: {value}")]
    Range { field: &'static str, value: f64 },
    #[error("k_off ({k_off}) must not exceed k_on ({k_on})")]
    Hysteresis { k_on: f64, k_off: f64 },
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, field: &'static str, value: f64| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Range { field, value })
            }
        };
        check(self.alpha > 0.0 && self.alpha <= 1.0, "alpha", self.alpha)?;
        check(self.sigma_floor > 0.0 && self.sigma_floor.is_finite(), "sigma_floor", self.sigma_floor)?;
        check(self.k_on.is_finite(), "k_on", self.k_on)?;
        check(self.k_off.is_finite(), "k_off", self.k_off)?;
        if self.k_off > self.k_on {
            return Err(ConfigError::Hysteresis { k_on: self.k_on, k_off: self.k_off });
        }
        check(self.min_width_bins >= 1, "min_width_bins", self.min_width_bins as f64)?;
        check(self.assoc_max_m >= 0.0, "assoc_max_m", self.assoc_max_m)?;
        check(self.timeout_blocks >= 1, "timeout_blocks", self.timeout_blocks as f64)?;
        check(self.confirm_blocks >= 1, "confirm_blocks", self.confirm_blocks as f64)?;
        check(self.vel_window >= 2, "vel_window", self.vel_window as f64)?;
        check(self.v_min_mps >= 0.0, "v_min_mps", self.v_min_mps)?;
        check(self.patch_seconds > 0.0 && self.patch_seconds.is_finite(), "patch_seconds", self.patch_seconds)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    Created,
    Updated,
    Ended,
}

/// Notification about a confirmed track.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackUpdate {
    pub kind: UpdateKind,
    pub id: u64,
    pub t_s: f64,
    pub x_start_m: f64,
    pub x_end_m: f64,
    pub centroid_m: f64,
    pub motion: Motion,
    pub velocity_mps: f64,
}

impl TrackUpdate {
    fn from_track(kind: UpdateKind, track: &EventTrack, t_s: f64) -> Self {
        let (x_start_m, x_end_m) = track.span_m();
        Self {
            kind,
            id: track.id,
            t_s,
            x_start_m,
            x_end_m,
            centroid_m: track.centroid_m(),
            motion: track.motion,
            velocity_mps: track.velocity_mps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DetectError {
    #[error("block has {actual} bins, detector was initialized for {expected}")]
    Dimension { expected: usize, actual: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Single-writer streaming detector for one fiber.
#[derive(Clone, Debug)]
pub struct Detector {
    layout: FiberLayout,
    cfg: DetectorConfig,
    background: BackgroundModel,
    active: Vec<bool>,
    tracker: Tracker,
    energy: Vec<f64>,
    last_activity: Option<ActivityMap>,
    blocks_processed: u64,
    patch_capacity: usize,
}

impl Detector {
    pub fn new(layout: &FiberLayout, cfg: DetectorConfig) -> Result<Self, DetectError> {
        cfg.validate()?;
        let n = layout.n_bins();
        let patch_capacity = libm::ceil(cfg.patch_seconds * layout.pulse_rate_hz()) as usize;
        Ok(Self {
            background: BackgroundModel::new(n, cfg.alpha, cfg.warmup_blocks, cfg.sigma_floor, cfg.warm_start),
            active: vec![false; n],
            tracker: Tracker::new(),
            energy: vec![0.0; n],
            last_activity: None,
            blocks_processed: 0,
            patch_capacity,
            layout: layout.clone(),
            cfg,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &FiberLayout {
        &self.layout
    }

    pub fn background(&self) -> &BackgroundModel {
        &self.background
    }

    pub fn tracks(&self) -> &[EventTrack] {
        self.tracker.tracks()
    }

    pub fn track(&self, id: u64) -> Option<&EventTrack> {
        self.tracker.get(id)
    }

    pub fn track_mut(&mut self, id: u64) -> Option<&mut EventTrack> {
        self.tracker.get_mut(id)
    }

    /// Energy of the most recently processed block.
    pub fn last_energy(&self) -> &[f64] {
        &self.energy
    }

    /// Activity of the most recent post-warmup block.
    pub fn last_activity(&self) -> Option<&ActivityMap> {
        self.last_activity.as_ref()
    }

    pub fn blocks_processed(&self) -> u64 {
        self.blocks_processed
    }

    /// Runs one block through the detection chain and returns notifications
    /// for confirmed tracks: `Created` on confirmation, `Updated` when a
    /// confirmed track absorbs a cluster, `Ended` when it times out. Nothing
    /// is emitted during warmup.
    pub fn process_block(&mut self, block: &WaterfallBlock) -> Result<Vec<TrackUpdate>, DetectError> {
        let n = self.layout.n_bins();
        if block.n_bins() != n {
            return Err(DetectError::Dimension { expected: n, actual: block.n_bins() });
        }
        block_energy_into(block, &mut self.energy);
        self.blocks_processed += 1;

        if self.background.in_warmup() {
            self.background.update(&self.energy, None).expect("energy has one entry per bin");
            return Ok(Vec::new());
        }

        let activity = activity_scores(&self.background, &self.energy, &self.active, self.cfg.k_on, self.cfg.k_off)
            .expect("warmup checked above");
        let excess: Vec<f64> = self.energy.iter().zip(self.background.mean()).map(|(e, m)| e - m).collect();
        let bin_size = self.layout.bin_size_m();
        let clusters = segment_active_bins(
            &activity.active,
            &activity.z,
            &excess,
            bin_size,
            self.cfg.gap_bins,
            self.cfg.min_width_bins,
        );
        let t_s = block.t0_s() + block.n_traces() as f64 / self.layout.pulse_rate_hz();
        let assoc = self.tracker.associate(&clusters, t_s, &self.cfg, bin_size);

        let mut updates = Vec::new();
        for track in self.tracker.tracks_mut() {
            let matched = assoc.matched.iter().any(|m| m.0 == track.id);
            if matched {
                if let Ok(v) = track.estimate_velocity(self.cfg.vel_window) {
                    track.update_motion(v, self.cfg.v_min_mps, self.cfg.motion_hold);
                }
            }
            append_patch(&mut track.patch_buffer, self.patch_capacity, block, track.span_bins);
            if assoc.confirmed.contains(&track.id) {
                updates.push(TrackUpdate::from_track(UpdateKind::Created, track, t_s));
            } else if matched && track.state == TrackState::Confirmed {
                updates.push(TrackUpdate::from_track(UpdateKind::Updated, track, t_s));
            }
        }
        for track in assoc.ended.iter().filter(|t| t.confirmed_t_s.is_some()) {
            updates.push(TrackUpdate::from_track(UpdateKind::Ended, track, t_s));
        }

        let freeze = dilate(&activity.active, self.cfg.gap_bins);
        self.background.update(&self.energy, Some(&freeze)).expect("energy has one entry per bin");
        self.active.clone_from(&activity.active);
        self.last_activity = Some(activity);
        Ok(updates)
    }
}

/// Appends the per-trace mean over `span` (inclusive bins) to a bounded
/// buffer.
fn append_patch(buf: &mut VecDeque<f64>, capacity: usize, block: &WaterfallBlock, span: (usize, usize)) {
    let (a, b) = span;
    let inv = 1.0 / (b - a + 1) as f64;
    for row in block.rows() {
        if buf.len() == capacity {
            buf.pop_front();
        }
        buf.push_back(row[a..=b].iter().sum::<f64>() * inv);
    }
}
