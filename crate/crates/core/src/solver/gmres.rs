//! Restarted GMRES with Givens rotations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::norm2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmresConfig {
    /// Target relative residual `||b - A x|| / ||b||`.
    pub tolerance: f64,
    /// Krylov dimension per cycle.
    pub inner: usize,
    /// Maximum number of cycles.
    pub outer: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-5,
            inner: 50,
            outer: 200,
        }
    }
}

impl GmresConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidTolerance(self.tolerance));
        }
        if self.inner == 0 || self.outer == 0 {
            return Err(Error::InvalidArgument("GMRES needs inner >= 1 and outer >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub solution: Vec<Complex64>,
    /// Relative residual after every inner iteration, starting with the
    /// initial guess. Within a cycle these are the Arnoldi estimates; each
    /// cycle starts from the recomputed true residual.
    pub residuals: Vec<f64>,
    /// True relative residual of `solution`.
    pub relative_residual: f64,
    /// Operator applications spent in Arnoldi steps.
    pub iterations: usize,
    pub cycles: usize,
    pub converged: bool,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn axpy(y: &mut [Complex64], alpha: Complex64, x: &[Complex64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

/// Rotation `[c s; -conj(s) c]` zeroing `b` in `(a, b)`.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64, Complex64) {
    let na = a.norm();
    let nb = b.norm();
    if nb == 0.0 {
        return (1.0, Complex64::default(), a);
    }
    if na == 0.0 {
        return (0.0, b.conj() / nb, Complex64::new(nb, 0.0));
    }
    let r = na.hypot(nb);
    let phase = a / na;
    let c = na / r;
    let s = phase * b.conj() / r;
    (c, s, phase * r)
}

/// Solves `A x = b` with GMRES(`inner`) restarted at most `outer` times
/// from `x0` (zero when `None`). `apply` computes `A v`.
///
/// Running out of iterations is not an error: the best iterate is returned
/// with `converged == false`.
pub fn gmres<F>(mut apply: F, rhs: &[Complex64], cfg: &GmresConfig, x0: Option<&[Complex64]>) -> Result<GmresOutcome>
where
    F: FnMut(&[Complex64]) -> Result<Vec<Complex64>>,
{
    cfg.validate()?;
    let n = rhs.len();
    if rhs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidArgument("right-hand side is not finite".into()));
    }
    let bnorm = norm2(rhs);
    let mut x = match x0 {
        Some(v) if v.len() != n => {
            return Err(Error::DimensionMismatch(format!("initial guess has {} entries, rhs {n}", v.len())))
        }
        Some(v) => v.to_vec(),
        None => vec![Complex64::default(); n],
    };
    if bnorm == 0.0 {
        return Ok(GmresOutcome {
            solution: vec![Complex64::default(); n],
            residuals: vec![0.0],
            relative_residual: 0.0,
            iterations: 0,
            cycles: 0,
            converged: true,
        });
    }

    let residual_of = |apply: &mut F, x: &[Complex64]| -> Result<Vec<Complex64>> {
        let ax = apply(x)?;
        if ax.len() != n {
            return Err(Error::DimensionMismatch(format!("operator returned {} entries, expected {n}", ax.len())));
        }
        Ok(rhs.iter().zip(&ax).map(|(b, a)| b - a).collect())
    };

    let m = cfg.inner;
    let mut r = if x0.is_some() { residual_of(&mut apply, &x)? } else { rhs.to_vec() };
    let mut rel = norm2(&r) / bnorm;
    let mut history = vec![rel];
    let mut best = (rel, x.clone());
    let mut iterations = 0;
    let mut cycles = 0;

    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![Complex64::default(); m]; m + 1];
    let mut rot: Vec<(f64, Complex64)> = Vec::with_capacity(m);
    let mut g = vec![Complex64::default(); m + 1];

    while rel > cfg.tolerance && cycles < cfg.outer {
        cycles += 1;
        let beta = norm2(&r);
        basis.clear();
        rot.clear();
        g.iter_mut().for_each(|v| *v = Complex64::default());
        g[0] = Complex64::new(beta, 0.0);
        basis.push(r.iter().map(|z| z / beta).collect());

        let mut k = 0;
        while k < m {
            let mut w = apply(&basis[k])?;
            if w.len() != n {
                return Err(Error::DimensionMismatch(format!("operator returned {} entries, expected {n}", w.len())));
            }
            iterations += 1;
            // modified Gram-Schmidt
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(v, &w);
                h[i][k] = hij;
                axpy(&mut w, -hij, v);
            }
            let wn = norm2(&w);
            h[k + 1][k] = Complex64::new(wn, 0.0);
            for (i, &(c, s)) in rot.iter().enumerate() {
                let (a, b) = (h[i][k], h[i + 1][k]);
                h[i][k] = a * c + s * b;
                h[i + 1][k] = -s.conj() * a + b * c;
            }
            let (c, s, rr) = givens(h[k][k], h[k + 1][k]);
            h[k][k] = rr;
            h[k + 1][k] = Complex64::default();
            rot.push((c, s));
            g[k + 1] = -s.conj() * g[k];
            g[k] *= c;
            k += 1;
            let est = g[k].norm() / bnorm;
            history.push(est);
            let breakdown = wn <= 1e-14 * beta.max(f64::MIN_POSITIVE);
            if est <= cfg.tolerance || breakdown {
                break;
            }
            basis.push(w.into_iter().map(|z| z / wn).collect());
        }

        // back substitution on the k x k triangle
        let mut y = vec![Complex64::default(); k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = if h[i][i].norm() > 0.0 { s / h[i][i] } else { Complex64::default() };
        }
        for (j, yj) in y.iter().enumerate() {
            axpy(&mut x, *yj, &basis[j]);
        }
        r = residual_of(&mut apply, &x)?;
        rel = norm2(&r) / bnorm;
        if let Some(last) = history.last_mut() {
            *last = rel;
        }
        if rel < best.0 {
            best = (rel, x.clone());
        }
        if !rel.is_finite() {
            break;
        }
    }

    let (relative_residual, solution) = if rel <= best.0 { (rel, x) } else { best };
    Ok(GmresOutcome {
        solution,
        residuals: history,
        relative_residual,
        iterations,
        cycles,
        converged: relative_residual <= cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn identity_converges_in_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_vec(&mut rng, 17);
        let out = gmres(|v| Ok(v.to_vec()), &b, &GmresConfig::default(), None).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        for (x, y) in out.solution.iter().zip(&b) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn diagonal_matches_direct_division() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random_vec(&mut rng, 10);
        let d: Vec<f64> = (1..=10).map(f64::from).collect();
        let cfg = GmresConfig {
            tolerance: 1e-13,
            ..GmresConfig::default()
        };
        let out = gmres(|v| Ok(v.iter().zip(&d).map(|(x, s)| x * s).collect()), &b, &cfg, None).unwrap();
        assert!(out.converged);
        for ((x, y), s) in out.solution.iter().zip(&b).zip(&d) {
            assert!((x - y / s).norm() < 1e-10);
        }
    }

    #[test]
    fn restarted_solve_of_nonnormal_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let mut a = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)) / (n as f64).sqrt());
        for i in 0..n {
            a[(i, i)] += Complex64::new(2.0, 0.5);
        }
        let b = random_vec(&mut rng, n);
        let cfg = GmresConfig {
            tolerance: 1e-10,
            inner: 5,
            outer: 100,
        };
        let op = |v: &[Complex64]| Ok((&a * DVector::from_column_slice(v)).as_slice().to_vec());
        let out = gmres(op, &b, &cfg, None).unwrap();
        assert!(out.converged);
        assert!(out.cycles > 1);
        let direct = a.clone().lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let err: f64 = out.solution.iter().zip(direct.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-8 * direct.norm());
        // the reported residual is the true one
        let ax = &a * DVector::from_column_slice(&out.solution);
        let r = (DVector::from_column_slice(&b) - ax).norm() / DVector::from_column_slice(&b).norm();
        assert!((r - out.relative_residual).abs() <= 1e-10 * r.max(1e-300) + 1e-15);
    }

    #[test]
    fn residual_history_is_monotone_within_cycles() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 40;
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(1.0 + i as f64 * 0.1, 0.0)
            } else {
                Complex64::new(rng.random_range(-0.05..0.05), 0.0)
            }
        });
        let b = random_vec(&mut rng, n);
        let cfg = GmresConfig {
            tolerance: 1e-12,
            inner: 8,
            outer: 50,
        };
        let op = |v: &[Complex64]| Ok((&a * DVector::from_column_slice(v)).as_slice().to_vec());
        let out = gmres(op, &b, &cfg, None).unwrap();
        for cycle in out.residuals[1..].chunks(cfg.inner) {
            for w in cycle.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-8));
            }
        }
    }

    #[test]
    fn exhausted_budget_is_reported_not_raised() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 30;
        let b = random_vec(&mut rng, n);
        // cyclic shift: GMRES stagnates until the full Krylov space is built
        let op = |v: &[Complex64]| {
            let mut out = v.to_vec();
            out.rotate_right(1);
            Ok(out)
        };
        let cfg = GmresConfig {
            tolerance: 1e-8,
            inner: 3,
            outer: 2,
        };
        let out = gmres(op, &b, &cfg, None).unwrap();
        assert!(!out.converged);
        assert!(out.relative_residual <= 1.0 + 1e-12);
        assert_eq!(out.iterations, 6);
    }

    #[test]
    fn zero_rhs_and_warm_start() {
        let zero = vec![Complex64::default(); 4];
        let out = gmres(|v| Ok(v.to_vec()), &zero, &GmresConfig::default(), None).unwrap();
        assert!(out.converged && out.solution.iter().all(|z| z.norm() == 0.0));
        let b = vec![Complex64::new(1.0, 2.0); 4];
        let out = gmres(|v| Ok(v.iter().map(|z| z * 3.0).collect()), &b, &GmresConfig::default(), Some(&[Complex64::new(1.0 / 3.0, 2.0 / 3.0); 4])).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }

    #[test]
    fn invalid_inputs() {
        let b = vec![Complex64::new(f64::NAN, 0.0)];
        assert!(gmres(|v| Ok(v.to_vec()), &b, &GmresConfig::default(), None).is_err());
        let cfg = GmresConfig {
            inner: 0,
            ..GmresConfig::default()
        };
        assert!(gmres(|v| Ok(v.to_vec()), &[Complex64::new(1.0, 0.0)], &cfg, None).is_err());
    }
}
