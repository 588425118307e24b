/// Time-domain statistics of an event's aggregated signal.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TimeStats {
    pub rms: f64,
    /// Peak absolute value over RMS.
    pub crest: f64,
    /// Excess kurtosis (0 for a Gaussian).
    pub kurtosis: f64,
    /// Sign changes of the mean-removed signal per second.
    pub zcr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("time statistics need at least 2 samples, got {0}")]
pub struct TooShort(pub usize);

/// RMS and crest factor describe the signal as given; kurtosis and the
/// zero-crossing rate use the mean-removed signal. A constant signal has
/// `zcr = 0`, `kurtosis = 0` and crest 1; an all-zero signal gives all zeros.
pub fn time_stats(signal: &[f64], rate_hz: f64) -> Result<TimeStats, TooShort> {
    let n = signal.len();
    if n < 2 {
        return Err(TooShort(n));
    }
    let nf = n as f64;
    let ms = signal.iter().map(|v| v * v).sum::<f64>() / nf;
    let rms = libm::sqrt(ms);
    if rms == 0.0 {
        return Ok(TimeStats::default());
    }
    let peak = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mean = signal.iter().sum::<f64>() / nf;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in signal {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m4 /= nf;
    let kurtosis = if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 };
    let mut crossings = 0usize;
    let mut prev = signal[0] - mean;
    for v in &signal[1..] {
        let d = v - mean;
        if (prev < 0.0 && d > 0.0) || (prev > 0.0 && d < 0.0) {
            crossings += 1;
        }
        if d != 0.0 {
            prev = d;
        }
    }
    let zcr = if m2 > 0.0 { crossings as f64 * rate_hz / nf } else { 0.0 };
    Ok(TimeStats { rms, crest: peak / rms, kurtosis, zcr })
}
