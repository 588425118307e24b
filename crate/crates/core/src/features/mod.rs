//! Fixed-order statistical descriptor of an event, the classifier input.

pub mod fft;
mod spectral;
mod temporal;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use spectral::{
    band_ratio, positive_spectrum, spectral_stats, stats_from_spectrum, SpectralStats, SpectrumTooShort, FLATNESS_EPS,
    MIN_SPECTRAL_LEN,
};
pub use temporal::{time_stats, TimeStats, TooShort};

use crate::detect::EventTrack;

pub const N_FEATURES: usize = 13;

/// Feature names in serialization order. Never reorder: trained models are
/// tied to this order through [`feature_order_hash`].
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "rms",
    "crest_factor",
    "kurtosis",
    "zero_crossing_rate",
    "spectral_centroid_hz",
    "spectral_bandwidth_hz",
    "spectral_flatness",
    "dominant_freq_hz",
    "band_ratio_low",
    "band_ratio_mid",
    "band_ratio_high",
    "spatial_extent_m",
    "abs_velocity_mps",
];

/// Band edges for the three band ratios, Hz.
pub const LOW_BAND_HZ: (f64, f64) = (1.0, 20.0);
pub const MID_BAND_HZ: (f64, f64) = (20.0, 100.0);
pub const HIGH_BAND_LO_HZ: f64 = 100.0;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// FNV-1a of the comma-joined feature names, as 16 lowercase hex digits.
pub fn feature_order_hash() -> String {
    let joined = FEATURE_NAMES.join(",");
    alloc::format!("{:016x}", fnv1a64(joined.as_bytes()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<[f64; N_FEATURES]> for FeatureVector {
    fn from(v: [f64; N_FEATURES]) -> Self {
        Self(v)
    }
}

/// An event's spatio-temporal patch reduced to one bin-averaged sample per
/// trace.
#[derive(Clone, Debug, PartialEq)]
pub struct EventPatch {
    pub t0_s: f64,
    pub duration_s: f64,
    pub x_start_m: f64,
    pub x_end_m: f64,
    pub agg_signal: Vec<f64>,
    pub pulse_rate_hz: f64,
}

impl EventPatch {
    /// The most recent `window_s` of a track's patch buffer, or `None` when
    /// the buffer is shorter than that. `end_t_s` is the time of the last
    /// buffered trace's block end.
    pub fn from_track(track: &EventTrack, end_t_s: f64, window_s: f64, pulse_rate_hz: f64) -> Option<Self> {
        let n = libm::round(window_s * pulse_rate_hz) as usize;
        let have = track.patch_buffer.len();
        if n == 0 || have < n {
            return None;
        }
        let (x_start_m, x_end_m) = track.span_m();
        Some(Self {
            t0_s: end_t_s - n as f64 / pulse_rate_hz,
            duration_s: n as f64 / pulse_rate_hz,
            x_start_m,
            x_end_m,
            agg_signal: track.patch_buffer.iter().skip(have - n).copied().collect(),
            pulse_rate_hz,
        })
    }

    /// Returns a copy with the aggregated signal multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { agg_signal: self.agg_signal.iter().map(|v| v * c).collect(), ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    /// Length of the analysis window, seconds.
    pub window_s: f64,
    /// When false the velocity feature is reported as 0 (ablation).
    pub use_velocity: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self { window_s: 1.0, use_velocity: true }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("patch covers {have_s} s, feature window needs {need_s} s")]
    InsufficientData { have_s: f64, need_s: f64 },
    #[error(transparent)]
    Spectrum(#[from] SpectrumTooShort),
    #[error("patch contains non-finite samples")]
    NonFinite,
}

/// Motion and extent of the event that produced a patch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventGeometry {
    pub spatial_extent_m: f64,
    pub velocity_mps: f64,
}

impl EventGeometry {
    /// Widest span of `track` since the patch started, and its velocity.
    pub fn of_track(track: &EventTrack, patch: &EventPatch) -> Self {
        Self { spatial_extent_m: track.max_span_width_since(patch.t0_s), velocity_mps: track.velocity_mps }
    }
}

/// Computes the feature vector of `patch`, in [`FEATURE_NAMES`] order.
pub fn extract_features(
    patch: &EventPatch,
    track: &EventTrack,
    opts: &FeatureOptions,
) -> Result<FeatureVector, FeatureError> {
    features_from_parts(patch, EventGeometry::of_track(track, patch), opts)
}

/// [`extract_features`] with the track geometry supplied directly.
pub fn features_from_parts(
    patch: &EventPatch,
    geom: EventGeometry,
    opts: &FeatureOptions,
) -> Result<FeatureVector, FeatureError> {
    let need_s = opts.window_s;
    if patch.duration_s + 1e-9 < need_s || patch.agg_signal.len() < 2 {
        return Err(FeatureError::InsufficientData { have_s: patch.duration_s, need_s });
    }
    if patch.agg_signal.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite);
    }
    let rate = patch.pulse_rate_hz;
    let ts = time_stats(&patch.agg_signal, rate)
        .map_err(|_| FeatureError::InsufficientData { have_s: patch.duration_s, need_s })?;
    if patch.agg_signal.len() < MIN_SPECTRAL_LEN {
        return Err(SpectrumTooShort(patch.agg_signal.len()).into());
    }
    let spectrum = positive_spectrum(&patch.agg_signal, rate);
    let ss = stats_from_spectrum(&spectrum);
    let v = if opts.use_velocity { geom.velocity_mps.abs() } else { 0.0 };
    Ok(FeatureVector([
        ts.rms,
        ts.crest,
        ts.kurtosis,
        ts.zcr,
        ss.centroid_hz,
        ss.bandwidth_hz,
        ss.flatness,
        ss.dominant_hz,
        band_ratio(&spectrum, LOW_BAND_HZ.0, LOW_BAND_HZ.1),
        band_ratio(&spectrum, MID_BAND_HZ.0, MID_BAND_HZ.1),
        band_ratio(&spectrum, HIGH_BAND_LO_HZ, f64::INFINITY),
        geom.spatial_extent_m,
        v,
    ]))
}
