//! Host-side companion to `fibersense-core`: recording formats, the
//! real-time pipeline, the HTTP/WebSocket service and dataset tooling.

pub mod config;
pub mod extract;
pub mod fanout;
pub mod jsonl;
pub mod model_io;
pub mod offline;
pub mod pipeline;
pub mod potd;
pub mod server;
pub mod store;
pub mod tile;

pub use config::PipelineConfig;
pub use pipeline::{start, PipelineHandle, Shared, Source};
