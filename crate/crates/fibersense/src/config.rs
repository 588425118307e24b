use std::fs;
use std::path::{Path, PathBuf};

use fibersense_core::detect::Detector;
use fibersense_core::engine::EngineConfig;
use fibersense_core::sim::{build_layout, FiberLayout, LayoutConfig, SimParams, SourceState};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamDownsample {
    pub time_factor: usize,
    pub space_factor: usize,
}

impl Default for StreamDownsample {
    fn default() -> Self {
        Self { time_factor: 10, space_factor: 2 }
    }
}

/// Everything a pipeline run needs. Missing fields take their defaults,
/// and serializing a loaded config yields the full effective configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub layout: LayoutConfig,
    /// Initial source state of the live simulator.
    pub sources: SourceState,
    pub sim: SimParams,
    pub engine: EngineConfig,
    /// Trained tree; without one the service detects but does not classify.
    pub model_path: Option<PathBuf>,
    pub block_size_traces: usize,
    pub stream_downsample: StreamDownsample,
    pub listen_addr: String,
    /// Records the live stream to this POTD file.
    pub record_path: Option<PathBuf>,
    /// Replays this POTD file instead of simulating.
    pub replay_path: Option<PathBuf>,
    /// Replay pacing relative to real time; 0 replays as fast as possible.
    pub replay_speed: f64,
    /// Appends event records to this file.
    pub event_log_path: Option<PathBuf>,
    /// Capacity of the source-to-detector queue, in blocks.
    pub source_queue_blocks: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            layout: LayoutConfig::default(),
            sources: SourceState::default(),
            sim: SimParams::default(),
            engine: EngineConfig::default(),
            model_path: None,
            block_size_traces: 100,
            stream_downsample: StreamDownsample::default(),
            listen_addr: "127.0.0.1:8080".into(),
            record_path: None,
            replay_path: None,
            replay_speed: 1.0,
            event_log_path: None,
            source_queue_blocks: 16,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn layout(&self) -> Result<FiberLayout, ConfigError> {
        build_layout(&self.layout).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let layout = self.layout()?;
        let ds = self.stream_downsample;
        if ds.time_factor == 0 || ds.space_factor == 0 {
            return invalid("downsample factors must be at least 1".into());
        }
        if self.block_size_traces == 0 || !self.block_size_traces.is_multiple_of(ds.time_factor) {
            return invalid(format!(
                "block_size_traces {} must be a positive multiple of time_factor {}",
                self.block_size_traces, ds.time_factor
            ));
        }
        if !(self.replay_speed >= 0.0 && self.replay_speed.is_finite()) {
            return invalid("replay_speed must be finite and nonnegative".into());
        }
        if let (Some(a), Some(b)) = (&self.replay_path, &self.record_path) {
            if a == b {
                return invalid("record_path and replay_path name the same file".into());
            }
        }
        if self.source_queue_blocks == 0 {
            return invalid("source_queue_blocks must be at least 1".into());
        }
        if self.listen_addr.parse::<std::net::SocketAddr>().is_err() {
            return invalid(format!("listen_addr {:?} is not a socket address", self.listen_addr));
        }
        self.sources.validated(&layout).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Detector::new(&layout, self.engine.detector.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
