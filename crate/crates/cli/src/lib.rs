//! Experiment driver for the compressed volume integral equation solver.
//!
//! Each subcommand reads an [`ExperimentConfig`], writes CSV/JSON/raw
//! outputs into the configured directory and finishes with a
//! `manifest.json` recording the effective config and code version.

pub mod bench;
pub mod commands;
pub mod compress_report;
pub mod config;
pub mod manifest;
pub mod phantom;
pub mod rank_sweep;
pub mod scenes;
pub mod sphere;

pub use commands::{run, CommandOutcome, Subcommand};
pub use config::{ExperimentConfig, Overrides};
