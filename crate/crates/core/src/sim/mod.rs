//! Deterministic phase-OTDR waterfall simulation of a three-zone test fiber.

mod block;
pub mod filter;
mod layout;
mod scenario;
mod source;
mod synth;

pub use block::{BlockError, WaterfallBlock};
pub use layout::{build_layout, FiberLayout, LayoutConfig, LayoutError, Segment, SegmentKind};
pub use scenario::{run_scenario, EventClass, LabelSpan, RunError, ScenarioError, ScenarioScript, TimedCommand};
pub use source::{
    CarAction, CarState, ControlCommand, FanState, SignalKind, SourceError, SourceState, SpeakerState,
    MAX_CAR_SPEED_MPS,
};
pub use synth::{fan_kernel, reflect, SimError, SimParams, Simulator, SourceSignals};
