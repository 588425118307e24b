use serde::{Deserialize, Serialize};

use super::layout::{FiberLayout, SegmentKind};

/// Largest car speed accepted by [`ControlCommand::Car`], in m/s.
pub const MAX_CAR_SPEED_MPS: f64 = 10.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    /// 120 Hz fundamental with a half-amplitude 240 Hz harmonic.
    #[default]
    Tone,
    /// Linear sine sweep 50 Hz to 300 Hz over 5 s, repeating.
    Chirp,
    /// Band-limited noise, 30 Hz to 80 Hz.
    Rumble,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeakerState {
    pub on: bool,
    pub signal_kind: SignalKind,
    pub center_m: f64,
    pub spatial_sigma_m: f64,
    pub amplitude_rad: f64,
}

impl Default for SpeakerState {
    fn default() -> Self {
        Self { on: false, signal_kind: SignalKind::Tone, center_m: 470.0, spatial_sigma_m: 3.0, amplitude_rad: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FanState {
    pub on: bool,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub gust_time_constant_s: f64,
    pub amplitude_rad: f64,
}

impl Default for FanState {
    fn default() -> Self {
        Self { on: false, band_low_hz: 5.0, band_high_hz: 40.0, gust_time_constant_s: 2.0, amplitude_rad: 0.08 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CarState {
    pub driving: bool,
    pub position_m: f64,
    pub speed_mps: f64,
    pub spatial_sigma_m: f64,
    pub amplitude_rad: f64,
}

impl Default for CarState {
    fn default() -> Self {
        Self { driving: false, position_m: 710.0, speed_mps: 2.0, spatial_sigma_m: 4.0, amplitude_rad: 0.1 }
    }
}

/// Parameters and on/off state of the three event sources.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceState {
    pub speaker: SpeakerState,
    pub fan: FanState,
    pub car: CarState,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SourceError {
    #[error("speaker center {0} m lies outside the acoustic zone")]
    SpeakerOutsideZone(f64),
    #[error("{field} must be positive and finite, got {value}")]
    NotPositive { field: &'static str, value: f64 },
    #[error("fan band must satisfy 0 < low < high < Nyquist ({nyquist_hz} Hz), got {low_hz}..{high_hz}")]
    FanBand { low_hz: f64, high_hz: f64, nyquist_hz: f64 },
    #[error("car speed {0} m/s exceeds the {MAX_CAR_SPEED_MPS} m/s limit")]
    CarSpeed(f64),
}

impl SourceState {
    /// Checks the source invariants against a layout and clamps the car into
    /// the road zone.
    pub fn validated(mut self, layout: &FiberLayout) -> Result<Self, SourceError> {
        let positive = |field: &'static str, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(SourceError::NotPositive { field, value })
            }
        };
        positive("speaker.spatial_sigma_m", self.speaker.spatial_sigma_m)?;
        positive("speaker.amplitude_rad", self.speaker.amplitude_rad)?;
        positive("fan.gust_time_constant_s", self.fan.gust_time_constant_s)?;
        positive("fan.amplitude_rad", self.fan.amplitude_rad)?;
        positive("car.spatial_sigma_m", self.car.spatial_sigma_m)?;
        positive("car.amplitude_rad", self.car.amplitude_rad)?;

        let (a0, a1) = layout.event_zone(SegmentKind::AcousticZone);
        let c = self.speaker.center_m;
        if !(c.is_finite() && c >= a0 && c < a1) {
            return Err(SourceError::SpeakerOutsideZone(c));
        }
        let nyquist_hz = layout.pulse_rate_hz() / 2.0;
        let (lo, hi) = (self.fan.band_low_hz, self.fan.band_high_hz);
        if !(lo > 0.0 && lo < hi && hi < nyquist_hz) {
            return Err(SourceError::FanBand { low_hz: lo, high_hz: hi, nyquist_hz });
        }
        let v = self.car.speed_mps;
        if !(v.is_finite() && v.abs() <= MAX_CAR_SPEED_MPS) {
            return Err(SourceError::CarSpeed(v));
        }
        let (r0, r1) = layout.event_zone(SegmentKind::RoadZone);
        self.car.position_m = if self.car.position_m.is_finite() { self.car.position_m.clamp(r0, r1) } else { r0 };
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarAction {
    Start,
    Stop,
}

/// An operator action on the simulated environment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControlCommand {
    SetFan {
        on: bool,
    },
    SetAudio {
        signal: SignalKind,
        on: bool,
    },
    Car {
        command: CarAction,
        #[serde(default)]
        speed_mps: f64,
    },
}

impl ControlCommand {
    pub fn validate(&self) -> Result<(), SourceError> {
        match *self {
            ControlCommand::Car { command: CarAction::Start, speed_mps }
                if !(speed_mps.is_finite() && speed_mps.abs() <= MAX_CAR_SPEED_MPS) =>
            {
                Err(SourceError::CarSpeed(speed_mps))
            }
            _ => Ok(()),
        }
    }
}
