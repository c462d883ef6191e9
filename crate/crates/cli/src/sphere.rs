//! Absorbed power of a voxelised lossy sphere against the Mie series.

use serde::Serialize;
use vie_core::assembly::{assemble_operator, OperatorKind};
use vie_core::fft_operator::MatvecStrategy;
use vie_core::mie::{mie_with, BesselPath, MieResult, MieSphere};
use vie_core::solver::{lossy_permittivity, solve_with, wavenumber, GridOperators};
use vie_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::scenes::{centred_grid, operator_settings, spectrum_bytes, sphere_map, voxels_across};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SphereRow {
    pub resolution_m: f64,
    pub grid_n: usize,
    pub method: &'static str,
    /// Compression tolerance (empty for the dense method).
    pub tol: Option<f64>,
    pub absorbed_power_w: f64,
    pub mie_absorbed_power_w: f64,
    pub relative_error: f64,
    pub converged: bool,
    pub iterations: usize,
    pub relative_residual: f64,
    pub n_storage_bytes: usize,
    pub assembly_seconds: f64,
    pub compression_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SphereReport {
    pub mie: MieResult,
    pub rows: Vec<SphereRow>,
}

impl SphereReport {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<SphereReport> {
    let sc = &cfg.sphere;
    if sc.resolutions.is_empty() {
        return Err(Error::InvalidArgument("sphere-validate needs at least one resolution".into()));
    }
    let eps = lossy_permittivity(sc.eps_real, sc.sigma, sc.frequency);
    let k0 = wavenumber(sc.frequency);
    let mie = mie_with(&MieSphere::new(sc.radius, eps, k0, sc.incident.amplitude), BesselPath::LogDerivative)?;
    let methods = cfg.select(&sc.methods);
    let tol = cfg.tol.unwrap_or(sc.tol);
    let mut rows = Vec::new();
    for &h in &sc.resolutions {
        let n = voxels_across(sc.domain_edge, h)?;
        let grid = centred_grid([n; 3], sc.domain_edge / n as f64)?;
        let map = sphere_map(&grid, sc.radius, eps, sc.frequency)?;

        let start = std::time::Instant::now();
        let n_tensors = assemble_operator(&grid, k0, OperatorKind::N, &cfg.quadrature)?;
        let k_tensors = assemble_operator(&grid, k0, OperatorKind::K, &cfg.quadrature)?;
        let assembly_seconds = start.elapsed().as_secs_f64();

        for &method in &methods {
            let settings = operator_settings(cfg, method, tol, sc.rule);
            let ops = GridOperators::from_tensors(grid.dims, &n_tensors, Some(&k_tensors), &settings)?;
            let report = solve_with(&grid, &map, &sc.incident, &ops, &cfg.gmres, tol)?;
            let p = report.power.total_absorbed;
            rows.push(SphereRow {
                resolution_m: grid.resolution[0],
                grid_n: n,
                method: method.name(),
                tol: (method != MatvecStrategy::Dense).then_some(tol),
                absorbed_power_w: p,
                mie_absorbed_power_w: mie.p_abs,
                relative_error: (p - mie.p_abs).abs() / mie.p_abs,
                converged: report.summary.converged,
                iterations: report.summary.iterations,
                relative_residual: report.summary.relative_residual,
                n_storage_bytes: spectrum_bytes(&ops.n, method),
                assembly_seconds,
                compression_seconds: ops.compression_seconds,
                solve_seconds: report.summary.solve_seconds,
            });
        }
    }
    Ok(SphereReport { mie, rows })
}
