//! Timing of the Fourier-domain element-wise product.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    apply_operator_with, cp_loop, decompress_cp, decompress_tucker, mac, tucker_loop, CurrentField, Dft3,
    EmbeddedSpectrum, MatvecStrategy, ScratchPolicy, Workspace,
};
use crate::decomp::{TruncationRule, TuckerCpForm, TuckerForm};
use crate::error::{Error, Result};
use crate::tensor::{FactorMatrix, Tensor3};

/// One benchmark measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub strategy: MatvecStrategy,
    /// Fourier array size per axis.
    pub n: usize,
    pub ranks: [usize; 3],
    /// Median time of the element-wise product, FFTs excluded.
    pub median_ms: f64,
    /// Median time of one forward 3D FFT of the same array size.
    pub fft_ms: f64,
    /// Real floating-point operations of one product.
    pub flops_est: f64,
    /// `flops_est / median_ms`, in GFLOP/s.
    pub gflops: f64,
    pub repetitions: usize,
}

impl BenchRecord {
    pub const CSV_HEADER: [&'static str; 8] =
        ["strategy", "n", "ranks", "median_ms", "fft_ms", "flops_est", "gflops", "repetitions"];

    pub fn csv_fields(&self) -> [String; 8] {
        [
            self.strategy.name().to_string(),
            self.n.to_string(),
            format!("{}x{}x{}", self.ranks[0], self.ranks[1], self.ranks[2]),
            format!("{:.6}", self.median_ms),
            format!("{:.6}", self.fft_ms),
            format!("{:.6e}", self.flops_est),
            format!("{:.4}", self.gflops),
            self.repetitions.to_string(),
        ]
    }
}

/// Complex multiply-adds of one product on a `dims` array, times 8.
pub fn product_flops(strategy: MatvecStrategy, dims: [usize; 3], ranks: [usize; 3]) -> f64 {
    let [n1, n2, n3] = dims.map(|v| v as f64);
    let [r1, r2, r3] = ranks.map(|v| v as f64);
    let nv = n1 * n2 * n3;
    let macs = match strategy {
        MatvecStrategy::Dense => nv,
        MatvecStrategy::HosvdDecompress => n1 * r1 * r2 * r3 + n1 * n2 * r2 * r3 + nv * r3 + nv,
        MatvecStrategy::HosvdLoop => nv * (r1 * r2 * r3 + r2 * r3 + r3 + 1.0),
        MatvecStrategy::TuckerCpDecompress => n1 * n2 * r1 + nv * r1 + nv,
        MatvecStrategy::TuckerCpLoop => n2 * n3 * r1 + nv * (r1 + 1.0),
    };
    8.0 * macs
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Runs `f` `repetitions + 1` times and returns the median of all but the
/// first run, in ms.
fn time_ms(repetitions: usize, mut f: impl FnMut()) -> f64 {
    f();
    let samples = (0..repetitions)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    median(samples)
}

fn random_values(rng: &mut ChaCha8Rng, len: usize) -> Vec<Complex64> {
    (0..len)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn random_factor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> FactorMatrix {
    FactorMatrix::from_vec(rows, cols, random_values(rng, rows * cols))
}

/// Times one component's element-wise product on random Fourier-domain
/// data of size `n^3` with ranks `rank` (uniform), plus one 3D FFT of the
/// same size for reference.
pub fn matvec_bench(n: usize, rank: usize, strategy: MatvecStrategy, repetitions: usize, seed: u64) -> Result<BenchRecord> {
    if n == 0 {
        return Err(Error::DegenerateDims([n; 3]));
    }
    if repetitions == 0 {
        return Err(Error::InvalidArgument("at least one timed repetition is needed".into()));
    }
    let dims = [n; 3];
    let nv = n * n * n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_values(&mut rng, nv);
    let mut acc = vec![Complex64::default(); nv];
    let ranks = if strategy == MatvecStrategy::Dense { dims } else { [rank; 3] };

    let median_ms = match strategy {
        MatvecStrategy::Dense => {
            let s = random_values(&mut rng, nv);
            time_ms(repetitions, || mac(&mut acc, &s, &x, 1.0))
        }
        MatvecStrategy::HosvdDecompress | MatvecStrategy::HosvdLoop => {
            let form = TuckerForm {
                core: Tensor3::from_vec([rank; 3], random_values(&mut rng, rank * rank * rank))?,
                factors: [0; 3].map(|_| random_factor(&mut rng, n, rank)),
                rule: TruncationRule::Energy,
                tol: 0.0,
            };
            if strategy == MatvecStrategy::HosvdLoop {
                time_ms(repetitions, || tucker_loop(&form, &mut acc, &x, 1.0))
            } else {
                let mut buf = vec![Complex64::default(); nv];
                time_ms(repetitions, || {
                    decompress_tucker(&form, &mut buf);
                    mac(&mut acc, &buf, &x, 1.0);
                })
            }
        }
        MatvecStrategy::TuckerCpDecompress | MatvecStrategy::TuckerCpLoop => {
            let form = TuckerCpForm {
                factors: [0; 3].map(|_| random_factor(&mut rng, n, rank)),
                tucker_ranks: [rank; 3],
                rule: TruncationRule::Energy,
                tol: 0.0,
            };
            if strategy == MatvecStrategy::TuckerCpLoop {
                time_ms(repetitions, || cp_loop(&form, &mut acc, &x, 1.0))
            } else {
                let mut buf = vec![Complex64::default(); nv];
                time_ms(repetitions, || {
                    decompress_cp(&form, &mut buf);
                    mac(&mut acc, &buf, &x, 1.0);
                })
            }
        }
    };

    let dft = Dft3::new(dims);
    let mut data = x.clone();
    let fft_ms = time_ms(repetitions, || dft.forward(&mut data));

    let flops_est = product_flops(strategy, dims, ranks);
    Ok(BenchRecord {
        strategy,
        n,
        ranks,
        median_ms,
        fft_ms,
        flops_est,
        gflops: flops_est / (median_ms * 1e6),
        repetitions,
    })
}

/// Times a full operator application (FFTs included in `median_ms`); the
/// FFT column holds the time of the 3 forward and 3 inverse transforms.
pub fn operator_bench(op: &EmbeddedSpectrum, x: &CurrentField, strategy: MatvecStrategy, repetitions: usize) -> Result<BenchRecord> {
    if repetitions == 0 {
        return Err(Error::InvalidArgument("at least one timed repetition is needed".into()));
    }
    let mut ws = Workspace::new(op, ScratchPolicy::minimal_for(strategy));
    apply_operator_with(op, x, strategy, &mut ws)?;
    let median_ms = time_ms(repetitions, || {
        apply_operator_with(op, x, strategy, &mut ws).expect("validated by the first call");
    });
    let dims = op.dims();
    let dft = Dft3::new(dims);
    let mut data = vec![Complex64::default(); dft.len()];
    let fft_ms = time_ms(repetitions, || {
        for _ in 0..3 {
            dft.forward_padded(&mut data, op.grid_dims());
            dft.inverse_cropped(&mut data, op.grid_dims());
        }
    });
    let mut ranks = [0; 3];
    let mut flops_est = 0.0;
    for c in op.components() {
        let r = match strategy {
            MatvecStrategy::Dense => dims,
            MatvecStrategy::HosvdDecompress | MatvecStrategy::HosvdLoop => c.tucker.as_ref().map_or([0; 3], |f| f.ranks()),
            _ => c.tucker_cp.as_ref().map_or([0; 3], |f| [f.rank(); 3]),
        };
        for q in 0..3 {
            ranks[q] = ranks[q].max(r[q]);
        }
        let per_use = product_flops(strategy, dims, r);
        flops_est += per_use * c.uses.len() as f64;
    }
    Ok(BenchRecord {
        strategy,
        n: op.grid_dims()[0],
        ranks,
        median_ms,
        fft_ms,
        flops_est,
        gflops: flops_est / (median_ms * 1e6),
        repetitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_are_positive_and_ordered_by_work() {
        let loop_rec = matvec_bench(12, 6, MatvecStrategy::HosvdLoop, 3, 1).unwrap();
        let cp_rec = matvec_bench(12, 6, MatvecStrategy::TuckerCpLoop, 3, 1).unwrap();
        assert!(loop_rec.median_ms > 0.0 && cp_rec.median_ms > 0.0);
        assert!(loop_rec.flops_est > 10.0 * cp_rec.flops_est);
        assert_eq!(cp_rec.ranks, [6; 3]);
        assert_eq!(cp_rec.csv_fields()[2], "6x6x6");
    }

    #[test]
    fn rejects_empty_runs() {
        assert!(matvec_bench(0, 2, MatvecStrategy::Dense, 3, 0).is_err());
        assert!(matvec_bench(4, 2, MatvecStrategy::Dense, 0, 0).is_err());
    }

    #[test]
    fn median_of_even_and_odd_samples() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
