use alloc::vec;
use alloc::vec::Vec;

use core::fmt;

use serde::{Deserialize, Serialize};

use super::block::WaterfallBlock;
use super::layout::{FiberLayout, SegmentKind};
use super::source::{CarAction, ControlCommand, SourceError, SourceState};
use super::synth::{SimError, SimParams, Simulator};

/// Ground-truth event classes, in canonical model order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventClass {
    Acoustic,
    Wind,
    Vehicle,
}

impl EventClass {
    pub const ALL: [EventClass; 3] = [EventClass::Acoustic, EventClass::Wind, EventClass::Vehicle];

    pub fn as_str(self) -> &'static str {
        match self {
            EventClass::Acoustic => "acoustic",
            EventClass::Wind => "wind",
            EventClass::Vehicle => "vehicle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }

    /// Fiber zone in which the source of this class acts.
    pub fn zone(self) -> SegmentKind {
        match self {
            EventClass::Acoustic => SegmentKind::AcousticZone,
            EventClass::Wind => SegmentKind::AerialZone,
            EventClass::Vehicle => SegmentKind::RoadZone,
        }
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedCommand {
    pub time_s: f64,
    pub command: ControlCommand,
}

/// A ground-truth annotation: a source was active over a time and space box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSpan {
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub x_start_m: f64,
    pub x_end_m: f64,
    pub class: EventClass,
}

impl LabelSpan {
    pub fn contains_time(&self, t_s: f64) -> bool {
        t_s >= self.t_start_s && t_s <= self.t_end_s
    }
}

/// A scripted run: initial source parameters plus a timed command list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default)]
    pub sources: SourceState,
    #[serde(default)]
    pub timeline: Vec<TimedCommand>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("duration must be positive and finite, got {0}")]
    Duration(f64),
    #[error("timeline is not sorted by time at entry {0}")]
    Unsorted(usize),
    #[error("timeline entry {index} at {time_s} s lies outside [0, duration]")]
    OutOfRange { index: usize, time_s: f64 },
    #[error("timeline entry {index}: {source}")]
    Command { index: usize, source: SourceError },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, thiserror::Error)]
pub enum RunError<E> {
    #[error(transparent)]
    Script(#[from] ScenarioError),
    #[error("block sink failed: {0}")]
    Sink(E),
}

impl ScenarioScript {
    pub fn new(duration_s: f64, seed: u64) -> Self {
        Self { duration_s, seed, sources: SourceState::default(), timeline: Vec::new() }
    }

    pub fn at(mut self, time_s: f64, command: ControlCommand) -> Self {
        self.timeline.push(TimedCommand { time_s, command });
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(ScenarioError::Duration(self.duration_s));
        }
        let mut prev = f64::NEG_INFINITY;
        for (index, entry) in self.timeline.iter().enumerate() {
            if !(entry.time_s >= 0.0 && entry.time_s <= self.duration_s) {
                return Err(ScenarioError::OutOfRange { index, time_s: entry.time_s });
            }
            if entry.time_s < prev {
                return Err(ScenarioError::Unsorted(index));
            }
            prev = entry.time_s;
            entry.command.validate().map_err(|source| ScenarioError::Command { index, source })?;
        }
        Ok(())
    }

    /// Number of traces the scenario produces.
    pub fn total_traces(&self, layout: &FiberLayout) -> u64 {
        libm::round(self.duration_s * layout.pulse_rate_hz()) as u64
    }

    /// Trace index at which a command issued at `time_s` takes effect.
    pub fn effective_trace(time_s: f64, layout: &FiberLayout) -> u64 {
        libm::ceil(time_s * layout.pulse_rate_hz() - 1e-6).max(0.0) as u64
    }

    /// Ground-truth spans: each interval during which a source is on yields
    /// one span over that source's zone. Times are the effective trace times
    /// of the commands that switch the source.
    pub fn label_spans(&self, layout: &FiberLayout) -> Vec<LabelSpan> {
        let rate = layout.pulse_rate_hz();
        let end_s = self.total_traces(layout) as f64 / rate;
        let mut open: [Option<f64>; 3] = [
            self.sources.speaker.on.then_some(0.0),
            self.sources.fan.on.then_some(0.0),
            self.sources.car.driving.then_some(0.0),
        ];
        let mut spans = Vec::new();
        let close = |class: EventClass, start: f64, end: f64, spans: &mut Vec<LabelSpan>| {
            if end > start {
                let (x0, x1) = layout.event_zone(class.zone());
                spans.push(LabelSpan { t_start_s: start, t_end_s: end, x_start_m: x0, x_end_m: x1, class });
            }
        };
        for entry in &self.timeline {
            let t = (Self::effective_trace(entry.time_s, layout) as f64 / rate).min(end_s);
            let (class, on) = match entry.command {
                ControlCommand::SetAudio { on, .. } => (EventClass::Acoustic, on),
                ControlCommand::SetFan { on } => (EventClass::Wind, on),
                ControlCommand::Car { command, .. } => (EventClass::Vehicle, command == CarAction::Start),
            };
            let slot = &mut open[class as usize];
            match (*slot, on) {
                (None, true) => *slot = Some(t),
                (Some(start), false) => {
                    close(class, start, t, &mut spans);
                    *slot = None;
                }
                _ => {}
            }
        }
        for class in EventClass::ALL {
            if let Some(start) = open[class as usize] {
                close(class, start, end_s, &mut spans);
            }
        }
        spans.sort_by(|a, b| a.t_start_s.total_cmp(&b.t_start_s).then(a.class.cmp(&b.class)));
        spans
    }
}

/// Executes `script` against a fresh simulator, handing blocks of
/// `block_traces` traces to `sink` in order, and returns the ground-truth
/// label spans. Commands take effect at their exact trace, which may fall
/// inside a block.
pub fn run_scenario<E, F>(
    script: &ScenarioScript,
    layout: &FiberLayout,
    params: SimParams,
    block_traces: usize,
    mut sink: F,
) -> Result<Vec<LabelSpan>, RunError<E>>
where
    F: FnMut(WaterfallBlock) -> Result<(), E>,
{
    script.validate()?;
    if block_traces == 0 {
        return Err(ScenarioError::Sim(SimError::ZeroTraces).into());
    }
    let mut sim = Simulator::new(layout.clone(), script.seed, params, script.sources).map_err(ScenarioError::from)?;
    let n_bins = layout.n_bins();
    let total = script.total_traces(layout);
    let commands: Vec<(u64, ControlCommand)> =
        script.timeline.iter().map(|e| (ScenarioScript::effective_trace(e.time_s, layout), e.command)).collect();
    let mut next_cmd = 0;
    while sim.trace_index() < total {
        let start = sim.trace_index();
        let n = (total - start).min(block_traces as u64);
        let end = start + n;
        let t0 = sim.time_s();
        let mut samples = vec![0.0; n as usize * n_bins];
        let mut filled = 0usize;
        while sim.trace_index() < end {
            while next_cmd < commands.len() && commands[next_cmd].0 <= sim.trace_index() {
                sim.apply_control(&commands[next_cmd].1).map_err(ScenarioError::from)?;
                next_cmd += 1;
            }
            let stop = commands.get(next_cmd).map_or(end, |c| c.0.clamp(sim.trace_index() + 1, end));
            let rows = (stop - sim.trace_index()) as usize;
            sim.synthesize_into(&mut samples[filled * n_bins..(filled + rows) * n_bins]);
            filled += rows;
        }
        let block = WaterfallBlock::new(t0, n as usize, n_bins, samples).expect("synthesized block is well formed");
        sink(block).map_err(RunError::Sink)?;
    }
    Ok(script.label_spans(layout))
}
