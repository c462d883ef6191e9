//! Maximum multilinear rank of the Green's-function tensors of a cube
//! against frequency.

use serde::Serialize;
use vie_core::assembly::{unique_components, Assembler, BasisOrder, OperatorKind, VoxelGrid};
use vie_core::decomp::multilinear_rank;
use vie_core::solver::{speed_of_light, wavenumber};
use vie_core::Result;

use crate::config::{ComponentSet, ExperimentConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub frequency_hz: f64,
    pub points_per_wavelength: u32,
    pub voxel_size_m: f64,
    pub grid_n: usize,
    pub component_set: &'static str,
    pub rule: &'static str,
    pub tol: f64,
    /// Worst case over the three modes and all components; empty when skipped.
    pub max_rank: Option<usize>,
    pub status: &'static str,
    pub reason: String,
}

impl ComponentSet {
    pub fn operator(self) -> OperatorKind {
        match self {
            ComponentSet::Scalar => OperatorKind::ScalarG,
            ComponentSet::N => OperatorKind::N,
            ComponentSet::K => OperatorKind::K,
        }
    }
}

/// Working set of one row in MB: the assembled components plus an
/// unfolding and its SVD workspace.
fn estimated_mb(n: usize, components: usize) -> f64 {
    let tensor = (n * n * n) as f64 * 16.0;
    tensor * (components as f64 + 3.0) / 1e6
}

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<RankRow>> {
    let sweep = &cfg.rank_sweep;
    let tol = cfg.tol.unwrap_or(sweep.tol);
    let mut rows = Vec::new();
    for &ppw in &sweep.points_per_wavelength {
        for &f in &sweep.frequencies {
            let wavelength = speed_of_light() / f;
            let n = (sweep.domain_edge * ppw as f64 / wavelength).ceil().max(1.0) as usize;
            let h = sweep.domain_edge / n as f64;
            for &set in &sweep.component_sets {
                let comps = unique_components(set.operator(), BasisOrder::Pwc)?;
                let mut row = RankRow {
                    frequency_hz: f,
                    points_per_wavelength: ppw,
                    voxel_size_m: h,
                    grid_n: n,
                    component_set: set.name(),
                    rule: sweep.rule.name(),
                    tol,
                    max_rank: None,
                    status: "ok",
                    reason: String::new(),
                };
                let need = estimated_mb(n, comps.len());
                if need > sweep.memory_limit_mb {
                    row.status = "skipped";
                    row.reason = format!("needs ~{need:.0} MB, limit {:.0} MB", sweep.memory_limit_mb);
                    rows.push(row);
                    continue;
                }
                let grid = VoxelGrid::cubic([n; 3], h)?;
                let asm = Assembler::new(&grid, wavenumber(f), &cfg.quadrature)?;
                let mut worst = 0;
                for comp in comps {
                    if comp.is_identically_zero() {
                        continue;
                    }
                    let t = asm.tensor(comp)?;
                    let ranks = multilinear_rank(&t, tol, sweep.rule)?;
                    worst = worst.max(ranks.into_iter().max().unwrap_or(0));
                }
                row.max_rank = Some(worst);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_of_exact_line() {
        let (s, c, r2) = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((s - 2.0).abs() < 1e-12 && (c - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_of_uncorrelated_points() {
        let (s, _, r2) = linear_fit(&[-1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]);
        assert_eq!(s, 0.0);
        assert_eq!(r2, 0.0);
    }
}
