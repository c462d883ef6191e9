//! 3D DFTs on the embedded grid built from cached 1D plans.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

type Plan = Arc<dyn Fft<f64>>;

fn plan(len: usize, direction: FftDirection) -> Plan {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Plan>)>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    let (planner, plans) = &mut *guard;
    let key = (len, direction == FftDirection::Forward);
    plans
        .entry(key)
        .or_insert_with(|| planner.plan_fft(len, direction))
        .clone()
}

/// 1D DFT of `data` in place (unnormalised).
pub(crate) fn dft_1d(data: &mut [Complex64], direction: FftDirection) {
    if data.is_empty() {
        return;
    }
    plan(data.len(), direction).process(data);
}

/// Separable 3D transform on an axis-1-fastest array of size `dims`.
#[derive(Clone)]
pub struct Dft3 {
    dims: [usize; 3],
    forward: [Plan; 3],
    inverse: [Plan; 3],
}

impl std::fmt::Debug for Dft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft3").field("dims", &self.dims).finish()
    }
}

impl Dft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let forward = dims.map(|n| plan(n, FftDirection::Forward));
        let inverse = dims.map(|n| plan(n, FftDirection::Inverse));
        Self { dims, forward, inverse }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Full forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward, self.dims);
    }

    /// Full inverse transform, without the `1/len` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse, self.dims);
    }

    /// Forward transform of an array that vanishes outside the leading
    /// `support` box; all-zero lines are skipped.
    pub fn forward_padded(&self, data: &mut [Complex64], support: [usize; 3]) {
        self.run(data, &self.forward, support);
    }

    /// Inverse transform (no `1/len`) that is only exact inside the leading
    /// `keep` box; lines not contributing to it are skipped.
    pub fn inverse_cropped(&self, data: &mut [Complex64], keep: [usize; 3]) {
        let d = self.dims;
        assert_eq!(data.len(), self.len());
        // axis 3 on every line, axis 2 on the kept planes, axis 1 on kept rows
        self.axis2(data, &self.inverse[2], d[1]);
        self.axis1(data, &self.inverse[1], keep[2]);
        self.axis0(data, &self.inverse[0], keep[1], keep[2]);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Plan; 3], support: [usize; 3]) {
        assert_eq!(data.len(), self.len());
        self.axis0(data, &plans[0], support[1], support[2]);
        self.axis1(data, &plans[1], support[2]);
        self.axis2(data, &plans[2], self.dims[1]);
    }

    /// Transforms along axis 1 for rows `j < rows_j`, `k < rows_k`.
    fn axis0(&self, data: &mut [Complex64], p: &Plan, rows_j: usize, rows_k: usize) {
        let [n0, n1, _] = self.dims;
        let plane = n0 * n1;
        data.par_chunks_mut(plane).take(rows_k).for_each(|pl| {
            p.process(&mut pl[..n0 * rows_j]);
        });
    }

    /// Transforms along axis 2 inside planes `k < planes`.
    fn axis1(&self, data: &mut [Complex64], p: &Plan, planes: usize) {
        let [n0, n1, _] = self.dims;
        let plane = n0 * n1;
        data.par_chunks_mut(plane).take(planes).for_each_init(
            || vec![Complex64::default(); plane],
            |tmp, pl| {
                for j in 0..n1 {
                    for i in 0..n0 {
                        tmp[i * n1 + j] = pl[i + n0 * j];
                    }
                }
                p.process(tmp);
                for j in 0..n1 {
                    for i in 0..n0 {
                        pl[i + n0 * j] = tmp[i * n1 + j];
                    }
                }
            },
        );
    }

    /// Transforms along axis 3 for rows `j < rows_j`.
    fn axis2(&self, data: &mut [Complex64], p: &Plan, rows_j: usize) {
        let [n0, n1, n2] = self.dims;
        let mut tmp = vec![Complex64::default(); n0 * n2];
        for j in 0..rows_j {
            for k in 0..n2 {
                let base = n0 * (j + n1 * k);
                for i in 0..n0 {
                    tmp[i * n2 + k] = data[base + i];
                }
            }
            p.process(&mut tmp);
            for k in 0..n2 {
                let base = n0 * (j + n1 * k);
                for i in 0..n0 {
                    data[base + i] = tmp[i * n2 + k];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::tests::random_tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn naive(data: &[Complex64], dims: [usize; 3], sign: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); data.len()];
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let mut acc = Complex64::default();
                    for c in 0..dims[2] {
                        for b in 0..dims[1] {
                            for a in 0..dims[0] {
                                let ph = sign
                                    * 2.0
                                    * PI
                                    * ((i * a) as f64 / dims[0] as f64
                                        + (j * b) as f64 / dims[1] as f64
                                        + (k * c) as f64 / dims[2] as f64);
                                acc += data[a + dims[0] * (b + dims[1] * c)] * Complex64::from_polar(1.0, ph);
                            }
                        }
                    }
                    out[i + dims[0] * (j + dims[1] * k)] = acc;
                }
            }
        }
        out
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dims = [4, 6, 2];
        let t = random_tensor(&mut rng, dims);
        let dft = Dft3::new(dims);
        let mut f = t.data().to_vec();
        dft.forward(&mut f);
        assert!(max_diff(&f, &naive(t.data(), dims, -1.0)) < 1e-12);
        let mut b = t.data().to_vec();
        dft.inverse(&mut b);
        assert!(max_diff(&b, &naive(t.data(), dims, 1.0)) < 1e-12);
    }

    #[test]
    fn pruned_variants_match_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = [3, 2, 4];
        let dims = [6, 4, 8];
        let dft = Dft3::new(dims);
        let small = random_tensor(&mut rng, n);
        let mut padded = vec![Complex64::default(); dft.len()];
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    padded[i + dims[0] * (j + dims[1] * k)] = small.get(i, j, k);
                }
            }
        }
        let mut full = padded.clone();
        dft.forward(&mut full);
        let mut pruned = padded.clone();
        dft.forward_padded(&mut pruned, n);
        assert!(max_diff(&full, &pruned) < 1e-12);

        let mut inv_full = full.clone();
        dft.inverse(&mut inv_full);
        let mut inv_crop = full.clone();
        dft.inverse_cropped(&mut inv_crop, n);
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let idx = i + dims[0] * (j + dims[1] * k);
                    assert!((inv_full[idx] - inv_crop[idx]).norm() < 1e-12);
                    assert!((inv_full[idx] / dft.len() as f64 - small.get(i, j, k)).norm() < 1e-12);
                }
            }
        }
    }
}
