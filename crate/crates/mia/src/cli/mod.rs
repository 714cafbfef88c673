//! Orchestration layer: config parsing, file formats, and the pipeline
//! commands behind the binary's subcommands. Everything here is plumbing;
//! the measurement logic lives in the other modules.

pub mod config;
pub mod format;
pub mod pipeline;
