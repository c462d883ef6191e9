//! Compressed-operator solves of a layered phantom compared with the dense solve.

use serde::Serialize;
use vie_core::assembly::{assemble_operator, OperatorKind, VoxelGrid};
use vie_core::fft_operator::MatvecStrategy;
use vie_core::solver::{solve_with, DielectricMap, GridOperators, SolveReport};
use vie_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::scenes::{centred_grid, layered_map, operator_settings, relative_l2};

/// One compressed solve. Every column is deterministic given the config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhantomRow {
    pub method: &'static str,
    pub tol: f64,
    pub p_abs_error: f64,
    pub b1_plus_error: f64,
    pub absorbed_power_w: f64,
    pub converged: bool,
    pub iterations: usize,
    pub relative_residual: f64,
    pub max_rank: usize,
    pub compression_factor: f64,
    pub max_tensor_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhantomTiming {
    pub method: &'static str,
    pub tol: Option<f64>,
    pub compression_seconds: f64,
    pub solve_seconds: f64,
}

pub struct PhantomOutcome {
    pub grid: VoxelGrid,
    pub map: DielectricMap,
    pub reference: SolveReport,
    pub rows: Vec<PhantomRow>,
    pub timings: Vec<PhantomTiming>,
    pub assembly_seconds: f64,
}

impl PhantomOutcome {
    pub fn all_converged(&self) -> bool {
        self.reference.summary.converged && self.rows.iter().all(|r| r.converged)
    }

    /// `(tol, p_abs_error)` of one method, in sweep order.
    pub fn errors(&self, method: MatvecStrategy) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.method == method.name())
            .map(|r| (r.tol, r.p_abs_error))
            .collect()
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<PhantomOutcome> {
    let pc = &cfg.phantom;
    if pc.layers.is_empty() {
        return Err(Error::InvalidArgument("phantom needs at least one layer".into()));
    }
    let grid = centred_grid(pc.dims, pc.resolution)?;
    let map = layered_map(&grid, &pc.layers, pc.frequency)?;
    let k0 = map.k0();

    let start = std::time::Instant::now();
    let n_tensors = assemble_operator(&grid, k0, OperatorKind::N, &cfg.quadrature)?;
    let k_tensors = assemble_operator(&grid, k0, OperatorKind::K, &cfg.quadrature)?;
    let assembly_seconds = start.elapsed().as_secs_f64();

    let solve = |strategy, tol| -> Result<(GridOperators, SolveReport)> {
        let settings = operator_settings(cfg, strategy, tol, pc.rule);
        let ops = GridOperators::from_tensors(grid.dims, &n_tensors, Some(&k_tensors), &settings)?;
        let report = solve_with(&grid, &map, &pc.incident, &ops, &cfg.gmres, tol)?;
        Ok((ops, report))
    };

    let (dense_ops, reference) = solve(MatvecStrategy::Dense, 0.0)?;
    let mut timings = vec![PhantomTiming {
        method: MatvecStrategy::Dense.name(),
        tol: None,
        compression_seconds: dense_ops.compression_seconds,
        solve_seconds: reference.summary.solve_seconds,
    }];
    drop(dense_ops);

    let mut rows = Vec::new();
    for method in cfg.select(&pc.methods) {
        if method == MatvecStrategy::Dense {
            continue;
        }
        for tol in cfg.tolerances(&pc.tolerances) {
            let (ops, report) = solve(method, tol)?;
            let stats = ops
                .n_compression()
                .ok_or_else(|| Error::InvalidArgument(format!("{} has no compressed form", method.name())))?;
            rows.push(PhantomRow {
                method: method.name(),
                tol,
                p_abs_error: relative_l2(&report.power.p_abs, &reference.power.p_abs),
                b1_plus_error: relative_l2(&report.power.b1_plus, &reference.power.b1_plus),
                absorbed_power_w: report.power.total_absorbed,
                converged: report.summary.converged,
                iterations: report.summary.iterations,
                relative_residual: report.summary.relative_residual,
                max_rank: stats.max_rank(),
                compression_factor: stats.compression_factor,
                max_tensor_error: stats.achieved_relative_error.unwrap_or(f64::NAN),
            });
            timings.push(PhantomTiming {
                method: method.name(),
                tol: Some(tol),
                compression_seconds: ops.compression_seconds,
                solve_seconds: report.summary.solve_seconds,
            });
        }
    }
    Ok(PhantomOutcome {
        grid,
        map,
        reference,
        rows,
        timings,
        assembly_seconds,
    })
}

/// Number of adjacent pairs where the error fails to decrease.
pub fn inversions(errors: &[f64]) -> usize {
    errors.windows(2).filter(|w| w[1] >= w[0]).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inversion_count() {
        assert_eq!(inversions(&[1.0, 0.1, 0.01]), 0);
        assert_eq!(inversions(&[1.0, 0.1, 0.2, 0.01]), 1);
        assert_eq!(inversions(&[]), 0);
    }
}
