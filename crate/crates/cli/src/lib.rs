//! Pipeline driver for the washgap toolkit: run configuration, input
//! validation, file-based stages and the run manifest.

pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod pipeline;
pub mod stages;
pub mod validate;

pub use config::RunConfig;
pub use manifest::{RunManifest, StageStatus};
pub use pipeline::{execute, Command};
