//! Event tracks and cluster-to-track association.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::cluster::SpatialCluster;
use super::DetectorConfig;

/// Entries kept in each track history before the oldest are dropped.
pub const HISTORY_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackState {
    Tentative,
    Confirmed,
    Ended,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    #[default]
    Stationary,
    Moving,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassVote {
    pub t_s: f64,
    pub label: String,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventTrack {
    pub id: u64,
    pub born_t_s: f64,
    pub last_seen_t_s: f64,
    pub state: TrackState,
    /// Time the track was confirmed, if it ever was.
    pub confirmed_t_s: Option<f64>,
    /// `(t_s, centroid_m)`, strictly increasing in time.
    pub centroid_history: VecDeque<(f64, f64)>,
    /// `(t_s, x_start_m, x_end_m)`.
    pub span_history: VecDeque<(f64, f64, f64)>,
    pub motion: Motion,
    pub velocity_mps: f64,
    /// Bin-averaged samples over the track's span, one per trace.
    pub patch_buffer: VecDeque<f64>,
    pub class_history: Vec<ClassVote>,
    pub(crate) span_bins: (usize, usize),
    pub(crate) hits: u32,
    pub(crate) misses: u32,
    above_v_min: u32,
    below_v_min: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("velocity needs {needed} centroid samples, track has {have}")]
pub struct InsufficientHistory {
    pub needed: usize,
    pub have: usize,
}

impl EventTrack {
    fn spawn(id: u64, cluster: &SpatialCluster, t_s: f64, bin_size_m: f64) -> Self {
        let mut track = Self {
            id,
            born_t_s: t_s,
            last_seen_t_s: t_s,
            state: TrackState::Tentative,
            confirmed_t_s: None,
            centroid_history: VecDeque::new(),
            span_history: VecDeque::new(),
            motion: Motion::Stationary,
            velocity_mps: 0.0,
            patch_buffer: VecDeque::new(),
            class_history: Vec::new(),
            span_bins: (cluster.x_start_bin, cluster.x_end_bin),
            hits: 1,
            misses: 0,
            above_v_min: 0,
            below_v_min: 0,
        };
        track.record(cluster, t_s, bin_size_m);
        track
    }

    fn record(&mut self, cluster: &SpatialCluster, t_s: f64, bin_size_m: f64) {
        if self.centroid_history.back().is_some_and(|&(t, _)| t >= t_s) {
            return;
        }
        if self.centroid_history.len() == HISTORY_LIMIT {
            self.centroid_history.pop_front();
            self.span_history.pop_front();
        }
        self.centroid_history.push_back((t_s, cluster.centroid_m));
        self.span_history.push_back((t_s, cluster.x_start_m(bin_size_m), cluster.x_end_m(bin_size_m)));
        self.span_bins = (cluster.x_start_bin, cluster.x_end_bin);
        self.last_seen_t_s = t_s;
    }

    pub fn centroid_m(&self) -> f64 {
        self.centroid_history.back().map_or(f64::NAN, |&(_, x)| x)
    }

    /// Latest `(x_start_m, x_end_m)`.
    pub fn span_m(&self) -> (f64, f64) {
        self.span_history.back().map_or((f64::NAN, f64::NAN), |&(_, a, b)| (a, b))
    }

    pub fn span_bins(&self) -> (usize, usize) {
        self.span_bins
    }

    pub fn is_live(&self) -> bool {
        self.state != TrackState::Ended
    }

    /// Widest reported span among history entries at or after `since_t_s`,
    /// falling back to the latest span.
    pub fn max_span_width_since(&self, since_t_s: f64) -> f64 {
        let w = self
            .span_history
            .iter()
            .filter(|(t, _, _)| *t >= since_t_s)
            .map(|(_, a, b)| b - a)
            .fold(f64::NEG_INFINITY, f64::max);
        if w.is_finite() {
            w
        } else {
            let (a, b) = self.span_m();
            b - a
        }
    }

    /// Least-squares slope of the most recent `window` centroids.
    pub fn estimate_velocity(&self, window: usize) -> Result<f64, InsufficientHistory> {
        let have = self.centroid_history.len();
        if have < window || window < 2 {
            return Err(InsufficientHistory { needed: window.max(2), have });
        }
        let pts: Vec<(f64, f64)> = self.centroid_history.iter().skip(have - window).copied().collect();
        Ok(least_squares_slope(&pts))
    }

    /// Feeds one velocity estimate through the motion rule: moving after
    /// `hold` consecutive estimates with `|v| >= v_min`, stationary again after
    /// `hold` consecutive estimates below it.
    pub fn update_motion(&mut self, velocity_mps: f64, v_min: f64, hold: u32) {
        self.velocity_mps = velocity_mps;
        if velocity_mps.abs() >= v_min {
            self.above_v_min += 1;
            self.below_v_min = 0;
            if self.above_v_min >= hold {
                self.motion = Motion::Moving;
            }
        } else {
            self.below_v_min += 1;
            self.above_v_min = 0;
            if self.below_v_min >= hold {
                self.motion = Motion::Stationary;
            }
        }
    }
}

/// Slope of the ordinary least-squares line through `pts` (`(t, x)` pairs).
pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let x_mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, x) in pts {
        let dt = t - t_mean;
        sxy += dt * (x - x_mean);
        sxx += dt * dt;
    }
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Outcome of associating one block's clusters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Association {
    /// `(track id, cluster index)` pairs.
    pub matched: Vec<(u64, usize)>,
    pub spawned: Vec<u64>,
    pub confirmed: Vec<u64>,
    pub ended: Vec<EventTrack>,
}

/// Owns the live tracks and hands out ids.
#[derive(Clone, Debug, Default)]
pub struct Tracker {
    tracks: Vec<EventTrack>,
    next_id: u64,
}

fn spans_touch(a: (usize, usize), b: (usize, usize), gap_bins: usize) -> bool {
    let (lo, hi) = if a.0 <= b.0 { (a, b) } else { (b, a) };
    hi.0 <= lo.1 + gap_bins
}

impl Tracker {
    pub fn new() -> Self {
        Self { tracks: Vec::new(), next_id: 1 }
    }

    pub fn tracks(&self) -> &[EventTrack] {
        &self.tracks
    }

    pub(crate) fn tracks_mut(&mut self) -> &mut [EventTrack] {
        &mut self.tracks
    }

    pub fn get(&self, id: u64) -> Option<&EventTrack> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn get_mut(&mut self, id: u64) -> Option<&mut EventTrack> {
        self.tracks.iter_mut().find(|t| t.id == id)
    }

    /// Greedy nearest-centroid association.
    ///
    /// Candidate pairs need centroid distance `<= assoc_max_m` and spans that
    /// overlap or lie within `gap_bins` of each other. Pairs are taken in
    /// order of distance, then older track id, then cluster index; each
    /// track and each cluster is used at most once. Unmatched clusters spawn
    /// tentative tracks; tracks unmatched for `timeout_blocks` consecutive
    /// blocks end and are removed.
    pub fn associate(
        &mut self,
        clusters: &[SpatialCluster],
        t_s: f64,
        cfg: &DetectorConfig,
        bin_size_m: f64,
    ) -> Association {
        let mut pairs: Vec<(f64, u64, usize, usize)> = Vec::new();
        for (ti, track) in self.tracks.iter().enumerate() {
            let c0 = track.centroid_m();
            for (ci, cluster) in clusters.iter().enumerate() {
                let d = (cluster.centroid_m - c0).abs();
                if d <= cfg.assoc_max_m
                    && spans_touch(track.span_bins, (cluster.x_start_bin, cluster.x_end_bin), cfg.gap_bins)
                {
                    pairs.push((d, track.id, ti, ci));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.3.cmp(&b.3)));

        let mut out = Association::default();
        let mut track_used = alloc::vec![false; self.tracks.len()];
        let mut cluster_used = alloc::vec![false; clusters.len()];
        for &(_, id, ti, ci) in &pairs {
            if track_used[ti] || cluster_used[ci] {
                continue;
            }
            track_used[ti] = true;
            cluster_used[ci] = true;
            out.matched.push((id, ci));
        }
        out.matched.sort_unstable();

        for (ti, track) in self.tracks.iter_mut().enumerate() {
            if track_used[ti] {
                let ci = out.matched.iter().find(|m| m.0 == track.id).map(|m| m.1).unwrap();
                track.record(&clusters[ci], t_s, bin_size_m);
                track.hits += 1;
                track.misses = 0;
                if track.state == TrackState::Tentative && track.hits >= cfg.confirm_blocks {
                    track.state = TrackState::Confirmed;
                    track.confirmed_t_s = Some(t_s);
                    out.confirmed.push(track.id);
                }
            } else {
                track.hits = 0;
                track.misses += 1;
                if track.misses >= cfg.timeout_blocks {
                    track.state = TrackState::Ended;
                }
            }
        }
        let (ended, live): (Vec<_>, Vec<_>) = core::mem::take(&mut self.tracks).into_iter().partition(|t| !t.is_live());
        self.tracks = live;
        out.ended = ended;

        for (ci, cluster) in clusters.iter().enumerate() {
            if cluster_used[ci] {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            let mut track = EventTrack::spawn(id, cluster, t_s, bin_size_m);
            if cfg.confirm_blocks <= 1 {
                track.state = TrackState::Confirmed;
                track.confirmed_t_s = Some(t_s);
                out.confirmed.push(id);
            }
            self.tracks.push(track);
            out.spawned.push(id);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster(centroid: f64, half: usize) -> SpatialCluster {
        let c = centroid as usize;
        SpatialCluster {
            x_start_bin: c - half,
            x_end_bin: c + half,
            centroid_m: centroid,
            peak_z: 10.0,
            total_excess_energy: 1.0,
        }
    }

    fn cfg() -> DetectorConfig {
        DetectorConfig::default()
    }

    #[test]
    fn within_gate_associates() {
        let mut tr = Tracker::new();
        tr.associate(&[cluster(470.0, 5)], 0.1, &cfg(), 1.0);
        let a = tr.associate(&[cluster(471.0, 5)], 0.2, &cfg(), 1.0);
        assert_eq!(a.matched, alloc::vec![(1, 0)]);
        assert!(a.spawned.is_empty());
    }

    #[test]
    fn outside_gate_spawns() {
        let mut tr = Tracker::new();
        tr.associate(&[cluster(470.0, 5)], 0.1, &cfg(), 1.0);
        let a = tr.associate(&[cluster(490.0, 5)], 0.2, &cfg(), 1.0);
        assert!(a.matched.is_empty());
        assert_eq!(a.spawned, alloc::vec![2]);
    }

    #[test]
    fn nearest_pairs_win() {
        let mut tr = Tracker::new();
        tr.associate(&[cluster(100.0, 1), cluster(105.0, 1)], 0.1, &cfg(), 1.0);
        let a = tr.associate(&[cluster(101.0, 1), cluster(104.0, 1)], 0.2, &cfg(), 1.0);
        assert_eq!(a.matched, alloc::vec![(1, 0), (2, 1)]);
    }

    #[test]
    fn confirmation_and_timeout() {
        let mut tr = Tracker::new();
        let c = [cluster(300.0, 3)];
        let mut t = 0.0;
        for i in 0..3 {
            t += 0.1;
            let a = tr.associate(&c, t, &cfg(), 1.0);
            assert_eq!(a.confirmed.len(), usize::from(i == 2));
        }
        for i in 0..10 {
            t += 0.1;
            let a = tr.associate(&[], t, &cfg(), 1.0);
            assert_eq!(a.ended.len(), usize::from(i == 9));
        }
        assert!(tr.tracks().is_empty());
        let a = tr.associate(&c, t + 0.1, &cfg(), 1.0);
        assert_eq!(a.spawned, alloc::vec![2]);
    }

    #[test]
    fn collinear_velocity_is_exact() {
        let mut tr = Tracker::new();
        for k in 0..10 {
            let x = 100.0 + 0.2 * k as f64;
            let mut c = cluster(x, 3);
            c.centroid_m = x;
            tr.associate(&[c], 0.1 * k as f64, &cfg(), 1.0);
        }
        let v = tr.tracks()[0].estimate_velocity(10).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn short_history_is_insufficient() {
        let mut tr = Tracker::new();
        tr.associate(&[cluster(50.0, 3)], 0.1, &cfg(), 1.0);
        assert_eq!(tr.tracks()[0].estimate_velocity(10), Err(InsufficientHistory { needed: 10, have: 1 }));
        assert_eq!(tr.tracks()[0].motion, Motion::Stationary);
    }

    #[test]
    fn motion_needs_two_consecutive_estimates() {
        let mut tr = Tracker::new();
        tr.associate(&[cluster(50.0, 3)], 0.1, &cfg(), 1.0);
        let t = &mut tr.tracks_mut()[0];
        t.update_motion(1.0, 0.5, 2);
        assert_eq!(t.motion, Motion::Stationary);
        t.update_motion(-1.0, 0.5, 2);
        assert_eq!(t.motion, Motion::Moving);
        t.update_motion(0.1, 0.5, 2);
        assert_eq!(t.motion, Motion::Moving);
        t.update_motion(0.7, 0.5, 2);
        t.update_motion(0.1, 0.5, 2);
        assert_eq!(t.motion, Motion::Moving);
        t.update_motion(0.0, 0.5, 2);
        assert_eq!(t.motion, Motion::Stationary);
    }
}
