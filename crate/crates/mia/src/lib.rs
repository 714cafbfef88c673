//! Membership-inference auditing toolkit.
//!
//! The crate implements the full audit loop against a built-in synthetic
//! learning stack: generate a labeled population, train small softmax
//! classifiers on sampled datasets, calibrate per-tolerance loss thresholds
//! from out-world model sets (shadow, population, reference, distilled,
//! leave-one-out), run the four membership-inference games, and report
//! ROC/AUC, attack agreement, and per-record vulnerability.
//!
//! Start with the `examples/` directory: each example is a runnable walk
//! through one capability. The `mia` binary wraps the same pipeline behind
//! subcommands for file-based runs.

#![forbid(unsafe_code)]

pub mod attacks;
pub mod cli;
pub mod core;
pub mod error;
pub mod eval;
pub mod games;
pub mod signals;
pub mod synth;
pub mod thresholds;

pub use error::{Error, Result};
