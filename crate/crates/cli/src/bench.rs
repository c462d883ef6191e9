//! Timing of the Fourier-domain product for every strategy.

use vie_core::fft_operator::{matvec_bench, BenchRecord, MatvecStrategy};
use vie_core::Result;

use crate::config::ExperimentConfig;

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<BenchRecord>> {
    let bc = &cfg.matvec_bench;
    let strategies = cfg.select(&MatvecStrategy::ALL);
    let mut rows = Vec::new();
    for &n in &bc.sizes {
        for &s in &strategies {
            rows.push(matvec_bench(n, bc.rank, s, bc.repetitions, cfg.seed)?);
        }
    }
    Ok(rows)
}

/// Strategies ordered fastest first, per size.
pub fn ranking(rows: &[BenchRecord]) -> Vec<(usize, Vec<MatvecStrategy>)> {
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.n).collect();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|n| {
            let mut at: Vec<&BenchRecord> = rows.iter().filter(|r| r.n == n).collect();
            at.sort_by(|a, b| a.median_ms.total_cmp(&b.median_ms));
            (n, at.into_iter().map(|r| r.strategy).collect())
        })
        .collect()
}

/// Least-squares slope of `log t` against `log n_v`.
pub fn scaling_exponent(voxels: &[f64], times: &[f64]) -> f64 {
    let x: Vec<f64> = voxels.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    crate::rank_sweep::linear_fit(&x, &y).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_of_power_law() {
        let v = [1e3, 1e4, 1e5];
        let t: Vec<f64> = v.iter().map(|x: &f64| 3.0 * x.powf(1.2)).collect();
        assert!((scaling_exponent(&v, &t) - 1.2).abs() < 1e-12);
    }
}
