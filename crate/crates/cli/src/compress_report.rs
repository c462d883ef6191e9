//! Storage of the HOSVD-compressed `N` and `K` tensors across tolerances.

use serde::Serialize;
use vie_core::assembly::{assemble_operator, OperatorKind, VoxelGrid};
use vie_core::decomp::{compression_stats_against, hosvd, CompressionStats, TuckerForm};
use vie_core::solver::wavenumber;
use vie_core::{Error, Result};

use crate::config::ExperimentConfig;

const BYTES_PER_ELEMENT: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressRow {
    pub operator: &'static str,
    pub rule: &'static str,
    pub tol: f64,
    pub components: usize,
    pub original_bytes: usize,
    pub compressed_bytes: usize,
    pub compression_factor: f64,
    /// Bytes of the full circulant forms (eight times the defining tensors).
    pub circulant_bytes: usize,
    /// Bytes of the Fourier-domain factors used by the matvec (factor rows doubled).
    pub circulant_compressed_bytes: usize,
    pub circulant_factor: f64,
    pub max_rank: usize,
    pub max_relative_error: f64,
}

fn circulant_elements(form: &TuckerForm) -> usize {
    let [r1, r2, r3] = form.ranks();
    let rows: usize = form.factors.iter().zip([r1, r2, r3]).map(|(f, r)| 2 * f.nrows() * r).sum();
    r1 * r2 * r3 + rows
}

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<CompressRow>> {
    let rc = &cfg.compress_report;
    if rc.tolerances.is_empty() || rc.rules.is_empty() {
        return Err(Error::InvalidArgument("compress-report needs tolerances and rules".into()));
    }
    let grid = VoxelGrid::cubic(rc.dims, rc.resolution)?;
    let k0 = wavenumber(rc.frequency);
    let mut rows = Vec::new();
    for (name, op) in [("N", OperatorKind::N), ("K", OperatorKind::K)] {
        let tensors = assemble_operator(&grid, k0, op, &cfg.quadrature)?;
        let nonzero: Vec<_> = tensors.iter().filter(|(c, _)| !c.is_identically_zero()).collect();
        for &rule in &rc.rules {
            for tol in cfg.tolerances(&rc.tolerances) {
                let mut parts: Vec<CompressionStats> = Vec::new();
                let mut circ = 0;
                for (_, t) in &nonzero {
                    let form = hosvd(t, tol, rule)?;
                    circ += circulant_elements(&form);
                    parts.push(compression_stats_against(&form, t)?);
                }
                let total = CompressionStats::combine(&parts)
                    .ok_or_else(|| Error::InvalidArgument("operator has no nonzero components".into()))?;
                let circulant_original = 8 * total.original_elements;
                rows.push(CompressRow {
                    operator: name,
                    rule: rule.name(),
                    tol,
                    components: nonzero.len(),
                    original_bytes: total.original_elements * BYTES_PER_ELEMENT,
                    compressed_bytes: total.compressed_elements * BYTES_PER_ELEMENT,
                    compression_factor: total.compression_factor,
                    circulant_bytes: circulant_original * BYTES_PER_ELEMENT,
                    circulant_compressed_bytes: circ * BYTES_PER_ELEMENT,
                    circulant_factor: circulant_original as f64 / circ as f64,
                    max_rank: total.max_rank(),
                    max_relative_error: total.achieved_relative_error.unwrap_or(f64::NAN),
                });
            }
        }
    }
    Ok(rows)
}
