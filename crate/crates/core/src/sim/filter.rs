//! Band-limited noise generators.
//!
//! A band is realized as a cascade of two second-order Butterworth sections,
//! a high-pass at the lower edge and a low-pass at the upper edge, both
//! obtained with the bilinear transform and frequency prewarping. With
//! `K = tan(pi * fc / fs)` and `n = 1 / (1 + sqrt(2) K + K^2)`:
//!
//! ```text
//! low-pass : b = [K^2 n, 2 K^2 n, K^2 n]
//! high-pass: b = [n, -2 n, n]
//! both     : a = [1, 2 (K^2 - 1) n, (1 - sqrt(2) K + K^2) n]
//! ```
//!
//! The cascade is a fourth-order band-pass. Its output is scaled to unit
//! variance for unit white input using the energy of the first
//! [`IMPULSE_LEN`] samples of its impulse response.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use core::f64::consts::{PI, SQRT_2};

/// Impulse response length used to compute the noise-power normalization.
pub const IMPULSE_LEN: usize = 1 << 15;

/// Second-order IIR section in transposed direct form II.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    s1: f64,
    s2: f64,
}

impl Biquad {
    pub fn new(b: [f64; 3], a: [f64; 2]) -> Self {
        Self { b, a, s1: 0.0, s2: 0.0 }
    }

    pub fn butterworth_lowpass(cutoff_hz: f64, rate_hz: f64) -> Self {
        let k = libm::tan(PI * cutoff_hz / rate_hz);
        let k2 = k * k;
        let n = 1.0 / (1.0 + SQRT_2 * k + k2);
        let b0 = k2 * n;
        Self::new([b0, 2.0 * b0, b0], [2.0 * (k2 - 1.0) * n, (1.0 - SQRT_2 * k + k2) * n])
    }

    pub fn butterworth_highpass(cutoff_hz: f64, rate_hz: f64) -> Self {
        let k = libm::tan(PI * cutoff_hz / rate_hz);
        let k2 = k * k;
        let n = 1.0 / (1.0 + SQRT_2 * k + k2);
        Self::new([n, -2.0 * n, n], [2.0 * (k2 - 1.0) * n, (1.0 - SQRT_2 * k + k2) * n])
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.s1;
        self.s1 = self.b[1] * x - self.a[0] * y + self.s2;
        self.s2 = self.b[2] * x - self.a[1] * y;
        y
    }

    pub fn reset(&mut self) {
        self.s1 = 0.0;
        self.s2 = 0.0;
    }
}

/// Fourth-order Butterworth band-pass (high-pass then low-pass).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandPass {
    high: Biquad,
    low: Biquad,
}

impl BandPass {
    pub fn new(low_hz: f64, high_hz: f64, rate_hz: f64) -> Self {
        Self { high: Biquad::butterworth_highpass(low_hz, rate_hz), low: Biquad::butterworth_lowpass(high_hz, rate_hz) }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        self.low.process(self.high.process(x))
    }

    /// Sum of squared impulse response over [`IMPULSE_LEN`] samples, i.e. the
    /// output variance for unit-variance white input.
    pub fn noise_power_gain(&self) -> f64 {
        let mut probe = *self;
        probe.high.reset();
        probe.low.reset();
        let mut acc = 0.0;
        for i in 0..IMPULSE_LEN {
            let h = probe.process(if i == 0 { 1.0 } else { 0.0 });
            acc += h * h;
        }
        acc
    }
}

/// Unit-variance band-limited Gaussian noise from its own random stream.
#[derive(Clone, Debug)]
pub struct BandNoise {
    filter: BandPass,
    scale: f64,
    rng: ChaCha8Rng,
}

impl BandNoise {
    pub fn new(low_hz: f64, high_hz: f64, rate_hz: f64, rng: ChaCha8Rng) -> Self {
        let filter = BandPass::new(low_hz, high_hz, rate_hz);
        let scale = 1.0 / libm::sqrt(filter.noise_power_gain());
        Self { filter, scale, rng }
    }

    #[inline]
    pub fn next_sample(&mut self) -> f64 {
        let w: f64 = self.rng.sample(StandardNormal);
        self.filter.process(w) * self.scale
    }
}

/// Mean-reverting (Ornstein-Uhlenbeck) gust process with unit stationary
/// variance, sampled once per trace. The fan amplitude is modulated by
/// `exp(GUST_DEPTH * g)`, which keeps the modulation strictly positive.
#[derive(Clone, Debug)]
pub struct GustProcess {
    value: f64,
    decay: f64,
    drive: f64,
    rng: ChaCha8Rng,
}

pub const GUST_DEPTH: f64 = 0.3;

impl GustProcess {
    pub fn new(time_constant_s: f64, rate_hz: f64, rng: ChaCha8Rng) -> Self {
        let mut g = Self { value: 0.0, decay: 0.0, drive: 0.0, rng };
        g.set_time_constant(time_constant_s, rate_hz);
        g
    }

    pub fn set_time_constant(&mut self, time_constant_s: f64, rate_hz: f64) {
        self.decay = libm::exp(-1.0 / (time_constant_s * rate_hz));
        self.drive = libm::sqrt(1.0 - self.decay * self.decay);
    }

    /// Advances one trace and returns the amplitude modulation factor.
    #[inline]
    pub fn next_modulation(&mut self) -> f64 {
        let w: f64 = self.rng.sample(StandardNormal);
        self.value = self.decay * self.value + self.drive * w;
        libm::exp(GUST_DEPTH * self.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use rand::SeedableRng;

    fn dft_power(x: &[f64], rate: f64, f: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let ph = 2.0 * PI * f * i as f64 / rate;
            re += v * libm::cos(ph);
            im -= v * libm::sin(ph);
        }
        (re * re + im * im) / x.len() as f64
    }

    #[test]
    fn lowpass_has_unit_dc_gain_and_half_power_at_cutoff() {
        let mut lp = Biquad::butterworth_lowpass(50.0, 1000.0);
        let mut y = 0.0;
        for _ in 0..5000 {
            y = lp.process(1.0);
        }
        assert!((y - 1.0).abs() < 1e-9);

        // steady-state sinusoid amplitude at the cutoff is 1/sqrt(2)
        let mut lp = Biquad::butterworth_lowpass(50.0, 1000.0);
        let mut peak: f64 = 0.0;
        for i in 0..20_000 {
            let v = lp.process(libm::sin(2.0 * PI * 50.0 * i as f64 / 1000.0));
            if i > 10_000 {
                peak = peak.max(v.abs());
            }
        }
        assert!((peak - 1.0 / SQRT_2).abs() < 2e-3, "peak {peak}");
    }

    #[test]
    fn band_noise_is_unit_variance_and_in_band() {
        let rng = ChaCha8Rng::seed_from_u64(7);
        let mut n = BandNoise::new(30.0, 80.0, 1000.0, rng);
        let x: Vec<f64> = (0..100_000).map(|_| n.next_sample()).collect();
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
        let seg = &x[..8192];
        let inband = dft_power(seg, 1000.0, 50.0);
        let outband = dft_power(seg, 1000.0, 300.0);
        assert!(inband > 100.0 * outband, "{inband} vs {outband}");
    }

    #[test]
    fn gust_modulation_positive() {
        let mut g = GustProcess::new(2.0, 1000.0, ChaCha8Rng::seed_from_u64(1));
        for _ in 0..10_000 {
            assert!(g.next_modulation() > 0.0);
        }
    }
}
