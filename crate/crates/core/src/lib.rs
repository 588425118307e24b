//! Phase-OTDR event sensing core.
//!
//! Everything in this crate is pure computation over in-memory values, so it
//! builds without `std` (an allocator is required). The modules follow the
//! data path of a sensing deployment:
//!
//! * [`sim`] synthesizes differential-phase waterfalls for a three-zone fiber
//!   with a loudspeaker, a fan and a vehicle as controllable event sources.
//! * [`detect`] scores each block of traces against a moving mean / moving
//!   standard deviation background, clusters active bins and tracks events.
//! * [`features`] turns an event's aggregated time series into a fixed-order
//!   statistical descriptor.
//! * [`classify`] trains and evaluates a CART decision tree on those
//!   descriptors.
//! * [`engine`] composes detection and classification into event records.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
// Comparisons are written as `!(x >= lo)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod classify;
pub mod detect;
pub mod engine;
pub mod features;
pub mod sim;

pub use classify::{predict, smooth_labels, train_tree, LabeledDataset, Prediction, TrainParams, TreeModel};
pub use detect::{Detector, DetectorConfig, EventTrack, TrackUpdate};
pub use engine::{Engine, EngineConfig, EventKind, EventRecord};
pub use features::{extract_features, FeatureVector, FEATURE_NAMES};
pub use sim::{
    build_layout, ControlCommand, FiberLayout, LabelSpan, LayoutConfig, ScenarioScript, SimParams, Simulator,
    SourceState, WaterfallBlock,
};
