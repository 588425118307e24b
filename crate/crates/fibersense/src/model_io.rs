//! Tree model files: one JSON document per model.

use std::fs;
use std::path::{Path, PathBuf};

use fibersense_core::classify::{ModelError, TreeModel};

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Invalid { path: PathBuf, source: ModelError },
}

pub fn save_model(path: &Path, model: &TreeModel) -> Result<(), ModelFileError> {
    let mut text = serde_json::to_string_pretty(model).expect("tree models serialize");
    text.push('\n');
    fs::write(path, text).map_err(|source| ModelFileError::Io { path: path.into(), source })
}

/// Reads and structurally validates a model. Feature-order compatibility is
/// checked by the consumer.
pub fn load_model(path: &Path) -> Result<TreeModel, ModelFileError> {
    let text = fs::read_to_string(path).map_err(|source| ModelFileError::Io { path: path.into(), source })?;
    let model: TreeModel =
        serde_json::from_str(&text).map_err(|source| ModelFileError::Parse { path: path.into(), source })?;
    model.validate().map_err(|source| ModelFileError::Invalid { path: path.into(), source })?;
    Ok(model)
}
