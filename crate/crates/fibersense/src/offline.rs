//! Batch detection over a recording, as fast as the engine runs.

use std::path::Path;

use fibersense_core::classify::TreeModel;
use fibersense_core::engine::{Engine, EngineConfig, EngineError, EventRecord};
use fibersense_core::sim::FiberLayout;

use crate::potd::{FormatError, PotdReader};

#[derive(Debug, thiserror::Error)]
pub enum DetectFileError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Runs the engine over every block of `potd` and returns the event log.
pub fn detect_file(
    potd: &Path,
    layout: &FiberLayout,
    cfg: EngineConfig,
    model: Option<TreeModel>,
    block_traces: usize,
) -> Result<Vec<EventRecord>, DetectFileError> {
    let mut reader = PotdReader::open(potd)?;
    reader.check_layout(layout)?;
    let mut engine = Engine::new(layout, cfg, model)?;
    let mut out = Vec::new();
    while let Some(block) = reader.read_block(block_traces)? {
        out.extend(engine.process_block(&block)?);
    }
    Ok(out)
}
