//! Run manifests: the effective config, the code version and the files a
//! run wrote, enough to repeat it exactly.

use std::path::{Path, PathBuf};

use serde::Serialize;
use vie_core::container::write_manifest;
use vie_core::Result;

use crate::config::ExperimentConfig;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub code_version: &'static str,
    pub subcommand: &'a str,
    pub config: &'a ExperimentConfig,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    pub converged: bool,
}

/// Writes `<out>/manifest.json` and returns its path.
pub fn write_run_manifest(
    out: &Path,
    subcommand: &str,
    config: &ExperimentConfig,
    outputs: &[PathBuf],
    converged: bool,
) -> Result<PathBuf> {
    let manifest = RunManifest {
        tool: "vie",
        code_version: CODE_VERSION,
        subcommand,
        config,
        outputs: outputs
            .iter()
            .map(|p| {
                p.strip_prefix(out)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
        converged,
    };
    let path = out.join("manifest.json");
    write_manifest(&path, &manifest)?;
    Ok(path)
}
