use alloc::vec::Vec;

use super::fft::power_spectrum;

/// Minimum signal length accepted by [`spectral_stats`].
pub const MIN_SPECTRAL_LEN: usize = 256;
/// Floor added inside the logarithm of the geometric mean.
pub const FLATNESS_EPS: f64 = 1e-20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralStats {
    pub centroid_hz: f64,
    pub bandwidth_hz: f64,
    /// Geometric over arithmetic mean of the power spectrum, in `[0, 1]`.
    pub flatness: f64,
    pub dominant_hz: f64,
}

impl SpectralStats {
    /// Convention for a signal with no power after mean removal.
    pub const ZERO_SIGNAL: Self = Self { centroid_hz: 0.0, bandwidth_hz: 0.0, flatness: 1.0, dominant_hz: 0.0 };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("spectral statistics need at least {MIN_SPECTRAL_LEN} samples, got {0}")]
pub struct SpectrumTooShort(pub usize);

/// Power spectrum of the mean-removed signal over the positive frequencies
/// `f_k = k * rate / n`, `k = 1..=n/2`, as `(frequency, power)` pairs.
pub fn positive_spectrum(signal: &[f64], rate_hz: f64) -> Vec<(f64, f64)> {
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = signal.iter().map(|v| v - mean).collect();
    let p = power_spectrum(&centered);
    p.into_iter().enumerate().skip(1).map(|(k, pk)| (k as f64 * rate_hz / n as f64, pk)).collect()
}

/// Centroid, bandwidth, flatness and dominant frequency of a spectrum from
/// [`positive_spectrum`]. A spectrum with zero total power yields
/// [`SpectralStats::ZERO_SIGNAL`].
pub fn stats_from_spectrum(spectrum: &[(f64, f64)]) -> SpectralStats {
    let total: f64 = spectrum.iter().map(|s| s.1).sum();
    if !(total > 0.0) || spectrum.is_empty() {
        return SpectralStats::ZERO_SIGNAL;
    }
    let centroid = spectrum.iter().map(|(f, p)| f * p).sum::<f64>() / total;
    let spread = spectrum.iter().map(|(f, p)| (f - centroid) * (f - centroid) * p).sum::<f64>() / total;
    let m = spectrum.len() as f64;
    let log_mean = spectrum.iter().map(|(_, p)| libm::log(p + FLATNESS_EPS)).sum::<f64>() / m;
    let flatness = (libm::exp(log_mean) / (total / m)).clamp(0.0, 1.0);
    let mut dominant = spectrum[0];
    for &s in &spectrum[1..] {
        if s.1 > dominant.1 {
            dominant = s;
        }
    }
    SpectralStats { centroid_hz: centroid, bandwidth_hz: libm::sqrt(spread), flatness, dominant_hz: dominant.0 }
}

pub fn spectral_stats(signal: &[f64], rate_hz: f64) -> Result<SpectralStats, SpectrumTooShort> {
    if signal.len() < MIN_SPECTRAL_LEN {
        return Err(SpectrumTooShort(signal.len()));
    }
    Ok(stats_from_spectrum(&positive_spectrum(signal, rate_hz)))
}

/// Fraction of total power in `[lo_hz, hi_hz)`; `hi_hz = inf` includes
/// Nyquist.
pub fn band_ratio(spectrum: &[(f64, f64)], lo_hz: f64, hi_hz: f64) -> f64 {
    let total: f64 = spectrum.iter().map(|s| s.1).sum();
    if !(total > 0.0) {
        return 0.0;
    }
    spectrum.iter().filter(|(f, _)| *f >= lo_hz && *f < hi_hz).map(|s| s.1).sum::<f64>() / total
}
