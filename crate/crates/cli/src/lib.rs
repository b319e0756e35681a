//! Batch front end for the Slow-Fast vision token pipeline: configuration and
//! manifest loading, command implementations and deterministic JSON output.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;

pub use config::PipelineConfig;
pub use error::{CliError, CliResult, ExitCode};
pub use manifest::{load_manifest, FrameEntry, FrameManifest, LoadedVideo};
