//! Voxelised test objects and shared solve plumbing.

use num_complex::Complex64;
use vie_core::assembly::VoxelGrid;
use vie_core::decomp::{Compressed, TruncationRule};
use vie_core::fft_operator::{EmbeddedSpectrum, MatvecStrategy};
use vie_core::solver::{lossy_permittivity, DielectricMap, OperatorSettings};
use vie_core::{Error, Result};

use crate::config::{ExperimentConfig, LayerSpec};

/// Cubic grid of `n^3` voxels of edge `h` centred on the origin.
pub fn centred_grid(dims: [usize; 3], h: f64) -> Result<VoxelGrid> {
    let origin = dims.map(|n| -0.5 * (n as f64 - 1.0) * h);
    VoxelGrid::new(dims, [h; 3], origin)
}

/// Number of voxels per axis closest to `edge / h` (at least one).
pub fn voxels_across(edge: f64, h: f64) -> Result<usize> {
    if !(edge > 0.0 && h > 0.0 && edge.is_finite() && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("domain edge {edge} and voxel size {h} must be positive")));
    }
    Ok(((edge / h).round() as usize).max(1))
}

fn grid_points(grid: &VoxelGrid) -> impl Iterator<Item = [f64; 3]> + '_ {
    let [n1, n2, n3] = grid.dims;
    (0..n3).flat_map(move |k| (0..n2).flat_map(move |j| (0..n1).map(move |i| grid.center(i, j, k))))
}

/// Homogeneous sphere at the origin; voxels whose centre lies inside take `eps`.
pub fn sphere_map(grid: &VoxelGrid, radius: f64, eps: Complex64, frequency: f64) -> Result<DielectricMap> {
    let one = Complex64::new(1.0, 0.0);
    let eps_r = grid_points(grid)
        .map(|p| if p.iter().map(|v| v * v).sum::<f64>() <= radius * radius { eps } else { one })
        .collect();
    DielectricMap::new(grid.dims, eps_r, frequency)
}

/// Concentric ellipsoids at the origin, listed outermost first.
pub fn layered_map(grid: &VoxelGrid, layers: &[LayerSpec], frequency: f64) -> Result<DielectricMap> {
    if layers.iter().any(|l| l.semi_axes.iter().any(|&a| !(a > 0.0))) {
        return Err(Error::InvalidArgument("ellipsoid semi-axes must be positive".into()));
    }
    let values: Vec<Complex64> = layers
        .iter()
        .map(|l| lossy_permittivity(l.eps_real, l.sigma, frequency))
        .collect();
    let eps_r = grid_points(grid)
        .map(|p| {
            layers
                .iter()
                .zip(&values)
                .filter(|(l, _)| (0..3).map(|q| (p[q] / l.semi_axes[q]).powi(2)).sum::<f64>() <= 1.0)
                .last()
                .map_or(Complex64::new(1.0, 0.0), |(_, &v)| v)
        })
        .collect();
    DielectricMap::new(grid.dims, eps_r, frequency)
}

/// Operator settings for one method of a sweep.
pub fn operator_settings(
    cfg: &ExperimentConfig,
    strategy: MatvecStrategy,
    tol: f64,
    rule: TruncationRule,
) -> OperatorSettings {
    OperatorSettings {
        strategy,
        tol,
        rule,
        cp: cfg.cp.tucker_cp(tol, rule, cfg.seed),
        quadrature: cfg.quadrature,
    }
}

/// Bytes held by the Fourier-domain forms a strategy applies.
pub fn spectrum_bytes(op: &EmbeddedSpectrum, strategy: MatvecStrategy) -> usize {
    let elements: usize = op
        .components()
        .iter()
        .map(|c| match strategy {
            MatvecStrategy::Dense => c.dense.as_ref().map_or(0, |t| t.len()),
            MatvecStrategy::HosvdDecompress | MatvecStrategy::HosvdLoop => {
                c.tucker.as_ref().map_or(0, |f| f.stored_elements())
            }
            MatvecStrategy::TuckerCpDecompress | MatvecStrategy::TuckerCpLoop => {
                c.tucker_cp.as_ref().map_or(0, |f| f.stored_elements())
            }
        })
        .sum();
    elements * 16
}

/// `||a - b|| / ||b||`.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}
