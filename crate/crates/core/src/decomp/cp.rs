//! Canonical polyadic fitting by alternating least squares.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::svd::{left_singular, pseudo_inverse};
use super::{Compressed, CpForm};
use crate::error::{Error, Result};
use crate::tensor::{FactorMatrix, Mode, Tensor3, ZERO};

/// Relative cutoff used for the pseudo-inverse of the ALS normal equations.
const PINV_CUTOFF: f64 = 1e-12;

/// Below this relative error the cheap Gram-based error estimate loses too
/// many digits to cancellation, so the model is reconstructed explicitly.
const EXPLICIT_ERROR_BELOW: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct CpAlsConfig {
    pub rank: usize,
    pub max_iters: usize,
    /// Stop once a sweep improves the relative error by less than this
    /// fraction of its previous value.
    pub stall_tol: f64,
    /// Extra runs from seeded random starts; the best fit is kept.
    pub restarts: usize,
    pub seed: u64,
}

impl CpAlsConfig {
    pub fn new(rank: usize, max_iters: usize, stall_tol: f64) -> Self {
        Self {
            rank,
            max_iters,
            stall_tol,
            restarts: 0,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CpOutcome {
    pub form: CpForm,
    /// Final `||T - CP||_F / ||T||_F`.
    pub relative_error: f64,
    /// Relative error after every sweep of the kept run.
    pub error_history: Vec<f64>,
    pub sweeps: usize,
    /// Set for requests that are legal but likely ill-posed.
    pub warning: Option<String>,
}

/// CP-ALS with the default deterministic start and no restarts.
pub fn cp_als(t: &Tensor3, rank: usize, max_iters: usize, stall_tol: f64) -> Result<CpOutcome> {
    cp_als_with(t, &CpAlsConfig::new(rank, max_iters, stall_tol))
}

pub fn cp_als_with(t: &Tensor3, cfg: &CpAlsConfig) -> Result<CpOutcome> {
    if cfg.rank == 0 {
        return Err(Error::InvalidArgument("CP rank must be at least 1".into()));
    }
    if cfg.max_iters == 0 {
        return Err(Error::InvalidArgument("CP-ALS needs at least one sweep".into()));
    }
    let dims = t.dims();
    if dims.contains(&0) {
        return Err(Error::DegenerateDims(dims));
    }
    let mut sorted = dims;
    sorted.sort_unstable();
    let warning = (cfg.rank > sorted[0] * sorted[1]).then(|| {
        format!(
            "CP rank {} exceeds {} (product of the two smallest dims {:?}); the fit may be ill-posed",
            cfg.rank,
            sorted[0] * sorted[1],
            dims
        )
    });

    let norm = t.frobenius_norm();
    if norm == 0.0 {
        let factors = dims.map(|n| FactorMatrix::zeros(n, cfg.rank));
        return Ok(CpOutcome {
            form: CpForm { factors },
            relative_error: 0.0,
            error_history: vec![0.0],
            sweeps: 0,
            warning,
        });
    }

    let mut best = run_als(t, norm, hosvd_start(t, cfg.rank, cfg.seed), cfg);
    for restart in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1 + restart as u64));
        let start = dims.map(|n| random_columns(&mut rng, n, cfg.rank));
        let candidate = run_als(t, norm, start, cfg);
        if candidate.relative_error < best.relative_error {
            best = candidate;
        }
    }
    best.warning = warning;
    Ok(best)
}

fn random_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> FactorMatrix {
    let mut m = DMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    for mut col in m.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= Complex64::from(n);
        }
    }
    m
}

/// Leading left singular vectors of each unfolding; columns beyond the mode
/// size are filled from a seeded generator.
fn hosvd_start(t: &Tensor3, rank: usize, seed: u64) -> [FactorMatrix; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mode::ALL.map(|mode| {
        let (u, _) = left_singular(&t.unfold(mode));
        let n = t.dims()[mode.axis()];
        let take = rank.min(u.ncols());
        let extra = random_columns(&mut rng, n, rank - take);
        FactorMatrix::from_fn(n, rank, |r, c| if c < take { u[(r, c)] } else { extra[(r, c - take)] })
    })
}

/// Matricised tensor times Khatri-Rao product for `mode`:
/// `M[i, l] = sum_{j,k} T_ijk conj(B_jl C_kl)` for mode 1, and analogously.
fn mttkrp(t: &Tensor3, f: &[FactorMatrix; 3], mode: Mode) -> FactorMatrix {
    let [n1, n2, n3] = t.dims();
    let r = f[0].ncols();
    let data = t.data();
    let mut m = FactorMatrix::zeros(t.dims()[mode.axis()], r);
    match mode {
        Mode::One => {
            for k in 0..n3 {
                for j in 0..n2 {
                    let fibre = &data[n1 * (j + n2 * k)..n1 * (j + n2 * k + 1)];
                    for l in 0..r {
                        let w = (f[1][(j, l)] * f[2][(k, l)]).conj();
                        for (dst, &x) in m.column_mut(l).iter_mut().zip(fibre) {
                            *dst += x * w;
                        }
                    }
                }
            }
        }
        Mode::Two | Mode::Three => {
            let a_conj = f[0].map(|z| z.conj());
            for k in 0..n3 {
                for j in 0..n2 {
                    let fibre = &data[n1 * (j + n2 * k)..n1 * (j + n2 * k + 1)];
                    for l in 0..r {
                        let s: Complex64 = a_conj.column(l).iter().zip(fibre).map(|(a, x)| a * x).sum();
                        if mode == Mode::Two {
                            m[(j, l)] += s * f[2][(k, l)].conj();
                        } else {
                            m[(k, l)] += s * f[1][(j, l)].conj();
                        }
                    }
                }
            }
        }
    }
    m
}

fn gram(f: &FactorMatrix) -> FactorMatrix {
    f.adjoint() * f
}

fn run_als(t: &Tensor3, norm: f64, mut f: [FactorMatrix; 3], cfg: &CpAlsConfig) -> CpOutcome {
    let norm2 = norm * norm;
    let mut history = Vec::with_capacity(cfg.max_iters.min(4096));
    let mut sweeps = 0;
    for _ in 0..cfg.max_iters {
        let mut last_m = None;
        for mode in Mode::ALL {
            let q = mode.axis();
            let (a, b) = match q {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let normal = gram(&f[a]).component_mul(&gram(&f[b])).map(|z| z.conj());
            let m = mttkrp(t, &f, mode);
            f[q] = &m * pseudo_inverse(&normal, PINV_CUTOFF);
            last_m = Some(m);
        }
        sweeps += 1;

        // ||T - X||^2 = ||T||^2 - 2 Re<T, X> + ||X||^2, using the mode-3 MTTKRP.
        let m3 = last_m.expect("three modes updated");
        let inner: Complex64 = f[2].iter().zip(m3.iter()).map(|(c, m)| c.conj() * m).sum();
        let model2 = gram(&f[0])
            .component_mul(&gram(&f[1]))
            .component_mul(&gram(&f[2]))
            .iter()
            .map(|z| z.re)
            .sum::<f64>();
        let mut err = ((norm2 - 2.0 * inner.re + model2).max(0.0) / norm2).sqrt();
        if err < EXPLICIT_ERROR_BELOW {
            err = explicit_error(t, &f, norm);
        }
        balance(&mut f);

        let prev = history.last().copied();
        history.push(err);
        if let Some(prev) = prev {
            if prev - err < cfg.stall_tol * prev || err == 0.0 {
                break;
            }
        }
    }
    let relative_error = explicit_error(t, &f, norm);
    CpOutcome {
        form: CpForm { factors: f },
        relative_error,
        error_history: history,
        sweeps,
        warning: None,
    }
}

fn explicit_error(t: &Tensor3, f: &[FactorMatrix; 3], norm: f64) -> f64 {
    let model = CpForm { factors: f.clone() }.reconstruct().expect("consistent CP factors");
    model.sub(t).expect("same dims").frobenius_norm() / norm
}

/// Equalise the norms of the three columns of every rank-one term.
fn balance(f: &mut [FactorMatrix; 3]) {
    for l in 0..f[0].ncols() {
        let norms = [f[0].column(l).norm(), f[1].column(l).norm(), f[2].column(l).norm()];
        if norms.iter().any(|&n| n == 0.0) {
            continue;
        }
        let target = (norms[0] * norms[1] * norms[2]).cbrt();
        for q in 0..3 {
            let s = Complex64::from(target / norms[q]);
            f[q].column_mut(l).iter_mut().for_each(|z| *z *= s);
        }
    }
}

/// Exact CP model of `t` built from its fibres along the mode whose
/// complementary pair of dimensions has the smallest product. Zero fibres
/// are skipped, so the rank is at most that product.
pub fn slice_cp(t: &Tensor3) -> CpForm {
    let dims = t.dims();
    // Fibre mode: the one left free; the other two index unit vectors.
    let fibre_mode = (0..3).max_by_key(|&q| (dims[q], q)).expect("three modes");
    let (a, b) = match fibre_mode {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut cols: [Vec<Vec<Complex64>>; 3] = Default::default();
    for ia in 0..dims[a] {
        for ib in 0..dims[b] {
            let fibre: Vec<Complex64> = (0..dims[fibre_mode])
                .map(|x| {
                    let mut idx = [0; 3];
                    idx[a] = ia;
                    idx[b] = ib;
                    idx[fibre_mode] = x;
                    t.get(idx[0], idx[1], idx[2])
                })
                .collect();
            if fibre.iter().all(|z| *z == ZERO) {
                continue;
            }
            let mut ea = vec![ZERO; dims[a]];
            ea[ia] = Complex64::new(1.0, 0.0);
            let mut eb = vec![ZERO; dims[b]];
            eb[ib] = Complex64::new(1.0, 0.0);
            cols[a].push(ea);
            cols[b].push(eb);
            cols[fibre_mode].push(fibre);
        }
    }
    let r = cols[0].len();
    let factors = [0, 1, 2].map(|q| {
        FactorMatrix::from_fn(dims[q], r, |row, c| cols[q][c][row])
    });
    CpForm { factors }
}
