use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Tolerance used when comparing segment boundaries in meters.
const BOUNDARY_EPS_M: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    LeadIn,
    AcousticZone,
    AerialZone,
    RoadZone,
    Tail,
}

impl SegmentKind {
    /// Zones that must appear exactly once in every layout.
    pub const EVENT_ZONES: [SegmentKind; 3] =
        [SegmentKind::AcousticZone, SegmentKind::AerialZone, SegmentKind::RoadZone];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_m: f64,
    pub end_m: f64,
    pub kind: SegmentKind,
}

impl Segment {
    pub const fn new(start_m: f64, end_m: f64, kind: SegmentKind) -> Self {
        Self { start_m, end_m, kind }
    }
}

/// Unvalidated layout parameters, as read from configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    pub n_bins: usize,
    pub bin_size_m: f64,
    pub pulse_rate_hz: f64,
    pub segments: Vec<Segment>,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        use SegmentKind::*;
        Self {
            n_bins: 1000,
            bin_size_m: 1.0,
            pulse_rate_hz: 1000.0,
            segments: alloc::vec![
                Segment::new(0.0, 400.0, LeadIn),
                Segment::new(400.0, 550.0, AcousticZone),
                Segment::new(550.0, 700.0, AerialZone),
                Segment::new(700.0, 850.0, RoadZone),
                Segment::new(850.0, 1000.0, Tail),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum LayoutError {
    #[error("layout needs at least one spatial bin")]
    NoBins,
    #[error("bin size must be positive and finite, got {0}")]
    BinSize(f64),
    #[error("pulse rate must be positive and finite, got {0}")]
    PulseRate(f64),
    #[error("segment {index} is empty or reversed ({start_m} m .. {end_m} m)")]
    EmptySegment { index: usize, start_m: f64, end_m: f64 },
    #[error("segment {index} overlaps its predecessor at {at_m} m")]
    Overlap { index: usize, at_m: f64 },
    #[error("gap in segment coverage between {from_m} m and {to_m} m")]
    Gap { from_m: f64, to_m: f64 },
    #[error("required zone {0:?} is missing")]
    MissingZone(SegmentKind),
    #[error("zone {0:?} appears more than once")]
    DuplicateZone(SegmentKind),
}

/// A validated fiber layout: contiguous segments covering the whole fiber.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiberLayout {
    n_bins: usize,
    bin_size_m: f64,
    pulse_rate_hz: f64,
    segments: Vec<Segment>,
}

/// Validates layout parameters.
///
/// Segments must start at 0, follow each other without gaps or overlaps and
/// end exactly at `n_bins * bin_size_m`; the acoustic, aerial and road zones
/// must each appear once.
pub fn build_layout(config: &LayoutConfig) -> Result<FiberLayout, LayoutError> {
    if config.n_bins == 0 {
        return Err(LayoutError::NoBins);
    }
    if !(config.bin_size_m.is_finite() && config.bin_size_m > 0.0) {
        return Err(LayoutError::BinSize(config.bin_size_m));
    }
    if !(config.pulse_rate_hz.is_finite() && config.pulse_rate_hz > 0.0) {
        return Err(LayoutError::PulseRate(config.pulse_rate_hz));
    }
    let length_m = config.n_bins as f64 * config.bin_size_m;
    let mut cursor = 0.0;
    for (index, seg) in config.segments.iter().enumerate() {
        if !(seg.start_m.is_finite() && seg.end_m.is_finite()) || seg.end_m <= seg.start_m {
            return Err(LayoutError::EmptySegment { index, start_m: seg.start_m, end_m: seg.end_m });
        }
        if seg.start_m < cursor - BOUNDARY_EPS_M {
            return Err(LayoutError::Overlap { index, at_m: seg.start_m });
        }
        if seg.start_m > cursor + BOUNDARY_EPS_M {
            return Err(LayoutError::Gap { from_m: cursor, to_m: seg.start_m });
        }
        cursor = seg.end_m;
    }
    if (cursor - length_m).abs() > BOUNDARY_EPS_M {
        if cursor < length_m {
            return Err(LayoutError::Gap { from_m: cursor, to_m: length_m });
        }
        return Err(LayoutError::Overlap { index: config.segments.len(), at_m: length_m });
    }
    for zone in SegmentKind::EVENT_ZONES {
        match config.segments.iter().filter(|s| s.kind == zone).count() {
            0 => return Err(LayoutError::MissingZone(zone)),
            1 => {}
            _ => return Err(LayoutError::DuplicateZone(zone)),
        }
    }
    Ok(FiberLayout {
        n_bins: config.n_bins,
        bin_size_m: config.bin_size_m,
        pulse_rate_hz: config.pulse_rate_hz,
        segments: config.segments.clone(),
    })
}

impl FiberLayout {
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn bin_size_m(&self) -> f64 {
        self.bin_size_m
    }

    pub fn pulse_rate_hz(&self) -> f64 {
        self.pulse_rate_hz
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn length_m(&self) -> f64 {
        self.n_bins as f64 * self.bin_size_m
    }

    /// Center of bin `i` in meters. Bin `i` covers `[i, i+1) * bin_size_m`.
    pub fn bin_center_m(&self, bin: usize) -> f64 {
        (bin as f64 + 0.5) * self.bin_size_m
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        (0..self.n_bins).map(|i| self.bin_center_m(i)).collect()
    }

    /// Bin containing position `x_m`, clamped to the fiber.
    pub fn bin_of(&self, x_m: f64) -> usize {
        let b = libm::floor(x_m / self.bin_size_m);
        if b <= 0.0 {
            0
        } else {
            (b as usize).min(self.n_bins - 1)
        }
    }

    /// `(start_m, end_m)` of a zone. Event zones always exist in a valid layout.
    pub fn zone(&self, kind: SegmentKind) -> Option<(f64, f64)> {
        self.segments.iter().find(|s| s.kind == kind).map(|s| (s.start_m, s.end_m))
    }

    pub(crate) fn event_zone(&self, kind: SegmentKind) -> (f64, f64) {
        self.zone(kind).expect("validated layout has every event zone")
    }

    pub fn to_config(&self) -> LayoutConfig {
        LayoutConfig {
            n_bins: self.n_bins,
            bin_size_m: self.bin_size_m,
            pulse_rate_hz: self.pulse_rate_hz,
            segments: self.segments.clone(),
        }
    }
}

impl Default for FiberLayout {
    fn default() -> Self {
        build_layout(&LayoutConfig::default()).expect("default layout is valid")
    }
}
