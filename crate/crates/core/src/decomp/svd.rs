//! Truncated singular value decomposition with the two rank-selection rules.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::FactorMatrix;

/// Relative window (w.r.t. the largest singular value) inside which a singular
/// value sitting on the `SigmaMax` threshold is kept.
pub const TIE_WINDOW: f64 = 1e-14;

/// How the truncation rank is chosen from the singular values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TruncationRule {
    /// Keep `sigma_j >= (tol / sqrt 3) * sigma_max`.
    SigmaMax,
    /// Keep the smallest `r` whose discarded tail satisfies
    /// `sqrt(sum_{j>r} sigma_j^2) <= (tol / sqrt 3) * ||m||_F`.
    #[default]
    Energy,
}

impl TruncationRule {
    pub fn name(self) -> &'static str {
        match self {
            TruncationRule::SigmaMax => "sigma_max",
            TruncationRule::Energy => "energy",
        }
    }

    /// Rank retained for descending singular values `sigma` at tolerance `tol`.
    pub fn rank(self, sigma: &[f64], tol: f64) -> usize {
        let sigma_max = sigma.first().copied().unwrap_or(0.0);
        if sigma_max == 0.0 {
            return 0;
        }
        let factor = tol / 3f64.sqrt();
        match self {
            TruncationRule::SigmaMax => {
                let threshold = factor * sigma_max;
                sigma
                    .iter()
                    .take_while(|&&s| s >= threshold || (threshold - s) / sigma_max < TIE_WINDOW)
                    .count()
            }
            TruncationRule::Energy => {
                let total: f64 = sigma.iter().map(|s| s * s).sum();
                let budget = factor * factor * total;
                // tail[r] = sum_{j >= r} sigma_j^2
                let mut tail = 0.0;
                let mut rank = sigma.len();
                for r in (0..sigma.len()).rev() {
                    tail += sigma[r] * sigma[r];
                    if tail <= budget {
                        rank = r;
                    } else {
                        break;
                    }
                }
                rank
            }
        }
    }
}

/// Result of [`truncated_svd`]: `m ~ u * diag(sigma) * v^H` with `rank` columns.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: FactorMatrix,
    /// Retained singular values, descending.
    pub sigma: Vec<f64>,
    pub v: FactorMatrix,
    pub rank: usize,
    /// Every singular value of the input, descending (useful for tail estimates).
    pub all_sigma: Vec<f64>,
}

fn check_input(m: &FactorMatrix, tol: f64) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    if !(tol >= 0.0) || !tol.is_finite() {
        return Err(Error::InvalidTolerance(tol));
    }
    Ok(())
}

/// Full SVD with singular values sorted descending, returning `(U, sigma, V)`.
fn sorted_svd(m: &FactorMatrix, want_v: bool) -> (FactorMatrix, Vec<f64>, Option<FactorMatrix>) {
    let svd = m.clone().svd(true, want_v);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = FactorMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = svd.v_t.map(|vt| FactorMatrix::from_fn(vt.ncols(), order.len(), |r, c| vt[(order[c], r)].conj()));
    (u, sigma, v)
}

/// Truncated SVD of `m` under `rule` at tolerance `tol`.
pub fn truncated_svd(m: &FactorMatrix, tol: f64, rule: TruncationRule) -> Result<TruncatedSvd> {
    check_input(m, tol)?;
    let (u, all_sigma, v) = sorted_svd(m, true);
    let v = v.expect("requested V");
    let rank = rule.rank(&all_sigma, tol);
    Ok(TruncatedSvd {
        u: u.columns(0, rank).into_owned(),
        sigma: all_sigma[..rank].to_vec(),
        v: v.columns(0, rank).into_owned(),
        rank,
        all_sigma,
    })
}

/// Left singular vectors and singular values only. Wide matrices go through
/// an LQ factorisation first, so only a square SVD is ever formed.
pub(crate) fn left_singular(m: &FactorMatrix) -> (FactorMatrix, Vec<f64>) {
    if m.ncols() > 2 * m.nrows() {
        let r = m.adjoint().qr().r();
        let small: DMatrix<Complex64> = r.adjoint();
        let (u, sigma, _) = sorted_svd(&small, false);
        (u, sigma)
    } else {
        let (u, sigma, _) = sorted_svd(m, false);
        (u, sigma)
    }
}

/// Truncated left factor `(U_r, all singular values, r)`.
pub(crate) fn truncated_left(m: &FactorMatrix, tol: f64, rule: TruncationRule) -> Result<(FactorMatrix, Vec<f64>, usize)> {
    check_input(m, tol)?;
    let (u, sigma) = left_singular(m);
    let rank = rule.rank(&sigma, tol);
    Ok((u.columns(0, rank).into_owned(), sigma, rank))
}

/// Pseudo-inverse discarding singular values below `rel_cutoff * sigma_max`.
pub(crate) fn pseudo_inverse(m: &FactorMatrix, rel_cutoff: f64) -> FactorMatrix {
    let svd = m.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("U"), svd.v_t.expect("V^T"));
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut out = FactorMatrix::zeros(m.ncols(), m.nrows());
    if sigma_max == 0.0 {
        return out;
    }
    for (idx, &s) in svd.singular_values.iter().enumerate() {
        if s > rel_cutoff * sigma_max {
            let vcol = vt.row(idx).adjoint();
            let ucol = u.column(idx);
            out += (vcol * ucol.adjoint()) * Complex64::from(1.0 / s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::tests::random_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_one_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_matrix(&mut rng, 5, 1);
        let v = random_matrix(&mut rng, 7, 1);
        let m = &u * v.adjoint();
        for tol in [1e-12, 1e-6, 0.5, 0.99] {
            for rule in [TruncationRule::SigmaMax, TruncationRule::Energy] {
                assert_eq!(truncated_svd(&m, tol, rule).unwrap().rank, 1, "tol {tol} {rule:?}");
            }
        }
    }

    #[test]
    fn identity_tol_zero_keeps_everything() {
        let m = FactorMatrix::identity(4, 4);
        for rule in [TruncationRule::SigmaMax, TruncationRule::Energy] {
            assert_eq!(truncated_svd(&m, 0.0, rule).unwrap().rank, 4);
        }
    }

    #[test]
    fn sigma_max_threshold_on_diagonal() {
        // threshold = 1e-6 / sqrt(3) ~ 5.8e-7: keeps 1 and 1e-3, drops 1e-9.
        let m = FactorMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(1e-3, 0.0),
            Complex64::new(1e-9, 0.0),
        ]));
        let svd = truncated_svd(&m, 1e-6, TruncationRule::SigmaMax).unwrap();
        assert_eq!(svd.rank, 2);
        assert!((svd.sigma[1] - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn tie_at_threshold_is_kept() {
        let t = 1e-2 / 3f64.sqrt();
        assert_eq!(TruncationRule::SigmaMax.rank(&[1.0, t * (1.0 - 1e-15), 1e-9], 1e-2), 2);
        assert_eq!(TruncationRule::SigmaMax.rank(&[1.0, t * (1.0 - 1e-10), 1e-9], 1e-2), 1);
    }

    #[test]
    fn energy_rule_tail_bound() {
        let sigma = [1.0, 0.1, 0.01, 0.001];
        // tol / sqrt3 * ||m|| must cover the discarded tail.
        let norm: f64 = sigma.iter().map(|s: &f64| s * s).sum::<f64>().sqrt();
        for tol in [1e-1, 1e-2, 1e-3, 1e-5] {
            let r = TruncationRule::Energy.rank(&sigma, tol);
            let tail: f64 = sigma[r..].iter().map(|s| s * s).sum::<f64>().sqrt();
            assert!(tail <= tol / 3f64.sqrt() * norm);
            if r > 0 {
                let tail_prev: f64 = sigma[r - 1..].iter().map(|s| s * s).sum::<f64>().sqrt();
                assert!(tail_prev > tol / 3f64.sqrt() * norm);
            }
        }
        assert_eq!(TruncationRule::Energy.rank(&[0.0, 0.0], 0.1), 0);
    }

    #[test]
    fn errors() {
        let empty = FactorMatrix::zeros(0, 3);
        assert!(matches!(truncated_svd(&empty, 0.1, TruncationRule::Energy), Err(Error::EmptyMatrix)));
        let m = FactorMatrix::identity(2, 2);
        assert!(matches!(truncated_svd(&m, -1.0, TruncationRule::Energy), Err(Error::InvalidTolerance(_))));
        assert!(truncated_svd(&m, f64::NAN, TruncationRule::Energy).is_err());
    }

    #[test]
    fn factors_reconstruct_and_wide_path_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_matrix(&mut rng, 4, 30);
        let svd = truncated_svd(&m, 0.0, TruncationRule::Energy).unwrap();
        let sigma = FactorMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            svd.rank,
            svd.sigma.iter().map(|&s| Complex64::new(s, 0.0)),
        ));
        let back = &svd.u * sigma * svd.v.adjoint();
        assert!((back - &m).norm() < 1e-13 * m.norm());
        let (u, s) = left_singular(&m);
        for (a, b) in s.iter().zip(&svd.all_sigma) {
            assert!((a - b).abs() < 1e-13);
        }
        // Same subspaces: |<u_i, u'_i>| = 1.
        for c in 0..4 {
            let overlap = (u.column(c).adjoint() * svd.u.column(c))[(0, 0)].norm();
            assert!((overlap - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pseudo_inverse_handles_collinear_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 3, 1);
        let m = FactorMatrix::from_fn(3, 2, |r, _| a[(r, 0)]);
        let g = m.adjoint() * &m;
        let p = pseudo_inverse(&g, 1e-12);
        assert!(p.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        // Moore-Penrose: G P G = G.
        assert!((&g * &p * &g - &g).norm() < 1e-12 * g.norm());
    }
}
