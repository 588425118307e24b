//! Waterfall synthesis.
//!
//! Each trace is produced in a fixed evaluation order so that a seed and a
//! command history determine the output bit for bit:
//!
//! 1. the source generators advance once, in the order rumble noise, fan
//!    noise, gust process, car noise (all of them, whether or not their
//!    source is on);
//! 2. the per-bin contribution is accumulated from zero as speaker term,
//!    then fan term, then car term;
//! 3. bins are visited in ascending order and each sample is
//!    `sensitivity[x] * contribution[x] + noise_sigma * w`, with `w` the next
//!    standard normal from the noise stream.
//!
//! All transcendental functions come from `libm`, so the sequence is also
//! independent of the platform's math library.

use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::block::WaterfallBlock;
use super::filter::{BandNoise, GustProcess};
use super::layout::{FiberLayout, SegmentKind};
use super::source::{CarAction, ControlCommand, SignalKind, SourceError, SourceState};

/// Gaussian kernels are evaluated out to this many standard deviations.
pub const KERNEL_HALF_WIDTH_SIGMAS: f64 = 8.0;
/// Width of the raised-cosine taper at each edge of the aerial zone.
pub const FAN_TAPER_M: f64 = 5.0;

pub const TONE_HZ: f64 = 120.0;
pub const CHIRP_START_HZ: f64 = 50.0;
pub const CHIRP_END_HZ: f64 = 300.0;
pub const CHIRP_PERIOD_S: f64 = 5.0;
pub const RUMBLE_BAND_HZ: (f64, f64) = (30.0, 80.0);
pub const CAR_BAND_HZ: (f64, f64) = (10.0, 80.0);

// Random substreams derived from the root seed.
const STREAM_SENSITIVITY: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_GUST: u64 = 2;
const STREAM_FAN: u64 = 3;
const STREAM_CAR: u64 = 4;
const STREAM_RUMBLE: u64 = 5;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Noise floor and fading model of the simulated interrogator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Standard deviation of the additive white noise, radians.
    pub noise_sigma: f64,
    /// Per-bin static sensitivity is drawn uniformly from this range.
    pub sensitivity_min: f64,
    pub sensitivity_max: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self { noise_sigma: 0.01, sensitivity_min: 0.3, sensitivity_max: 1.0 }
    }
}

impl SimParams {
    /// No noise and unit sensitivity: samples equal the source contribution.
    pub fn noiseless() -> Self {
        Self { noise_sigma: 0.0, sensitivity_min: 1.0, sensitivity_max: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("a block needs at least one trace")]
    ZeroTraces,
    #[error(transparent)]
    Source(#[from] SourceError),
}

/// Folds a position back into `[lo, hi]` by reflecting at both ends.
pub fn reflect(position: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    let mut u = libm::fmod(position - lo, 2.0 * span);
    if u < 0.0 {
        u += 2.0 * span;
    }
    if u <= span {
        lo + u
    } else {
        lo + 2.0 * span - u
    }
}

/// The temporal generators of the three sources.
#[derive(Clone, Debug)]
pub struct SourceSignals {
    rate_hz: f64,
    rumble: BandNoise,
    fan: BandNoise,
    gust: GustProcess,
    car: BandNoise,
}

impl SourceSignals {
    pub fn new(seed: u64, state: &SourceState, rate_hz: f64) -> Self {
        Self {
            rate_hz,
            rumble: BandNoise::new(RUMBLE_BAND_HZ.0, RUMBLE_BAND_HZ.1, rate_hz, substream(seed, STREAM_RUMBLE)),
            fan: BandNoise::new(state.fan.band_low_hz, state.fan.band_high_hz, rate_hz, substream(seed, STREAM_FAN)),
            gust: GustProcess::new(state.fan.gust_time_constant_s, rate_hz, substream(seed, STREAM_GUST)),
            car: BandNoise::new(CAR_BAND_HZ.0, CAR_BAND_HZ.1, rate_hz, substream(seed, STREAM_CAR)),
        }
    }

    /// Advances all generators by one trace and writes the summed source
    /// contribution (radians) for trace `trace_index` into `out`.
    ///
    /// `out` has one entry per bin and is overwritten.
    pub fn contribution(
        &mut self,
        state: &SourceState,
        layout: &FiberLayout,
        trace_index: u64,
        car_position_m: f64,
        out: &mut [f64],
    ) {
        let rumble = self.rumble.next_sample();
        let fan = self.fan.next_sample();
        let gust = self.gust.next_modulation();
        let car = self.car.next_sample();

        out.fill(0.0);
        let t = trace_index as f64 / self.rate_hz;

        let sp = &state.speaker;
        if sp.on {
            let signature = match sp.signal_kind {
                SignalKind::Tone => libm::sin(2.0 * PI * TONE_HZ * t) + 0.5 * libm::sin(2.0 * PI * 2.0 * TONE_HZ * t),
                SignalKind::Chirp => {
                    let tau = libm::fmod(t, CHIRP_PERIOD_S);
                    let sweep = (CHIRP_END_HZ - CHIRP_START_HZ) / (2.0 * CHIRP_PERIOD_S);
                    libm::sin(2.0 * PI * (CHIRP_START_HZ * tau + sweep * tau * tau))
                }
                SignalKind::Rumble => rumble,
            };
            add_gaussian(out, layout, sp.center_m, sp.spatial_sigma_m, sp.amplitude_rad * signature);
        }

        if state.fan.on {
            let value = state.fan.amplitude_rad * fan * gust;
            let (z0, z1) = layout.event_zone(SegmentKind::AerialZone);
            for bin in layout.bin_of(z0)..=layout.bin_of(z1) {
                let w = fan_kernel(layout.bin_center_m(bin), z0, z1);
                if w > 0.0 {
                    out[bin] += w * value;
                }
            }
        }

        let c = &state.car;
        if c.driving {
            add_gaussian(out, layout, car_position_m, c.spatial_sigma_m, c.amplitude_rad * car);
        }
    }
}

/// Flat unit gain across `[z0, z1)` with a raised-cosine taper to zero over
/// [`FAN_TAPER_M`] at both edges.
pub fn fan_kernel(x_m: f64, z0: f64, z1: f64) -> f64 {
    if x_m < z0 || x_m >= z1 {
        return 0.0;
    }
    let d = (x_m - z0).min(z1 - x_m);
    if d >= FAN_TAPER_M {
        1.0
    } else {
        0.5 * (1.0 - libm::cos(PI * d / FAN_TAPER_M))
    }
}

fn add_gaussian(out: &mut [f64], layout: &FiberLayout, center_m: f64, sigma_m: f64, value: f64) {
    let reach = KERNEL_HALF_WIDTH_SIGMAS * sigma_m;
    let lo = layout.bin_of(center_m - reach);
    let hi = layout.bin_of(center_m + reach);
    let denom = 2.0 * sigma_m * sigma_m;
    for (bin, slot) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
        let d = layout.bin_center_m(bin) - center_m;
        *slot += libm::exp(-d * d / denom) * value;
    }
}

/// Single-writer simulation state: advances time and applies commands.
#[derive(Clone, Debug)]
pub struct Simulator {
    layout: FiberLayout,
    params: SimParams,
    seed: u64,
    sources: SourceState,
    sensitivity: Vec<f64>,
    noise: ChaCha8Rng,
    signals: SourceSignals,
    trace: u64,
    car_anchor_trace: u64,
    car_anchor_m: f64,
    scratch: Vec<f64>,
}

impl Simulator {
    pub fn new(layout: FiberLayout, seed: u64, params: SimParams, sources: SourceState) -> Result<Self, SimError> {
        let sources = sources.validated(&layout)?;
        let mut srng = substream(seed, STREAM_SENSITIVITY);
        let (lo, hi) = (params.sensitivity_min, params.sensitivity_max);
        let sensitivity = (0..layout.n_bins())
            .map(|_| {
                let u: f64 = srng.random();
                lo + (hi - lo) * u
            })
            .collect();
        let signals = SourceSignals::new(seed, &sources, layout.pulse_rate_hz());
        Ok(Self {
            scratch: vec![0.0; layout.n_bins()],
            car_anchor_m: sources.car.position_m,
            car_anchor_trace: 0,
            trace: 0,
            noise: substream(seed, STREAM_NOISE),
            signals,
            sensitivity,
            sources,
            seed,
            params,
            layout,
        })
    }

    pub fn layout(&self) -> &FiberLayout {
        &self.layout
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    /// Current source state, with the car position as of the next trace.
    pub fn sources(&self) -> SourceState {
        let mut s = self.sources;
        s.car.position_m = self.car_position_m();
        s
    }

    pub fn sensitivity(&self) -> &[f64] {
        &self.sensitivity
    }

    /// Index of the next trace to be synthesized.
    pub fn trace_index(&self) -> u64 {
        self.trace
    }

    /// Timestamp of the next trace.
    pub fn time_s(&self) -> f64 {
        self.trace as f64 / self.layout.pulse_rate_hz()
    }

    /// Car position at the next trace.
    pub fn car_position_m(&self) -> f64 {
        self.car_position_at(self.trace)
    }

    fn car_position_at(&self, trace: u64) -> f64 {
        let car = &self.sources.car;
        if !car.driving {
            return self.car_anchor_m;
        }
        let (r0, r1) = self.layout.event_zone(SegmentKind::RoadZone);
        let elapsed = (trace - self.car_anchor_trace) as f64 / self.layout.pulse_rate_hz();
        reflect(self.car_anchor_m + car.speed_mps * elapsed, r0, r1)
    }

    /// Applies a command, effective from the next synthesized trace.
    /// Invalid commands leave the state unchanged.
    pub fn apply_control(&mut self, cmd: &ControlCommand) -> Result<(), SimError> {
        cmd.validate()?;
        match *cmd {
            ControlCommand::SetFan { on } => self.sources.fan.on = on,
            ControlCommand::SetAudio { signal, on } => {
                self.sources.speaker.signal_kind = signal;
                self.sources.speaker.on = on;
            }
            ControlCommand::Car { command, speed_mps } => {
                let here = self.car_position_m();
                self.car_anchor_m = here;
                self.car_anchor_trace = self.trace;
                self.sources.car.position_m = here;
                match command {
                    CarAction::Start => {
                        self.sources.car.driving = true;
                        self.sources.car.speed_mps = speed_mps;
                    }
                    CarAction::Stop => self.sources.car.driving = false,
                }
            }
        }
        Ok(())
    }

    /// Synthesizes `out.len() / n_bins` traces into `out` (row-major).
    pub fn synthesize_into(&mut self, out: &mut [f64]) {
        let n_bins = self.layout.n_bins();
        debug_assert_eq!(out.len() % n_bins, 0);
        let sigma = self.params.noise_sigma;
        for row in out.chunks_exact_mut(n_bins) {
            let car_pos = self.car_position_at(self.trace);
            self.signals.contribution(&self.sources, &self.layout, self.trace, car_pos, &mut self.scratch);
            for ((sample, &c), &s) in row.iter_mut().zip(&self.scratch).zip(&self.sensitivity) {
                let w: f64 = self.noise.sample(StandardNormal);
                *sample = s * c + sigma * w;
            }
            self.trace += 1;
        }
    }

    pub fn synthesize_block(&mut self, n_traces: usize) -> Result<WaterfallBlock, SimError> {
        if n_traces == 0 {
            return Err(SimError::ZeroTraces);
        }
        let t0 = self.time_s();
        let mut samples = vec![0.0; n_traces * self.layout.n_bins()];
        self.synthesize_into(&mut samples);
        Ok(WaterfallBlock::new(t0, n_traces, self.layout.n_bins(), samples).expect("synthesized block is well formed"))
    }
}
