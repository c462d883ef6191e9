use serde::{Deserialize, Serialize};

use super::cp::{cp_als_with, slice_cp, CpAlsConfig};
use super::svd::truncated_left;
use super::{compression_stats_against, CompressionStats, CpForm, TruncationRule, TuckerCpForm, TuckerForm};
use crate::error::{Error, Result};
use crate::tensor::{Mode, Tensor3};

/// Truncated higher-order SVD.
///
/// Each unfolding is truncated under `rule`; the core is the projection
/// `t x_1 U1^H x_2 U2^H x_3 U3^H`. With [`TruncationRule::Energy`] the
/// reconstruction satisfies `||t - t~||_F <= tol ||t||_F`.
pub fn hosvd(t: &Tensor3, tol: f64, rule: TruncationRule) -> Result<TuckerForm> {
    let dims = t.dims();
    if dims.contains(&0) {
        return Err(Error::DegenerateDims(dims));
    }
    let mut factors = Vec::with_capacity(3);
    for mode in Mode::ALL {
        let (u, _, _) = truncated_left(&t.unfold(mode), tol, rule)?;
        factors.push(u);
    }
    let factors: [_; 3] = factors.try_into().expect("three modes");
    let core = t
        .n_mode_product(&factors[0].adjoint(), Mode::One)?
        .n_mode_product(&factors[1].adjoint(), Mode::Two)?
        .n_mode_product(&factors[2].adjoint(), Mode::Three)?;
    Ok(TuckerForm { core, factors, rule, tol })
}

/// Ranks of the three unfoldings under `rule` at `tol`.
pub fn multilinear_rank(t: &Tensor3, tol: f64, rule: TruncationRule) -> Result<[usize; 3]> {
    let dims = t.dims();
    if dims.contains(&0) {
        return Err(Error::DegenerateDims(dims));
    }
    let mut ranks = [0; 3];
    for mode in Mode::ALL {
        ranks[mode.axis()] = truncated_left(&t.unfold(mode), tol, rule)?.2;
    }
    Ok(ranks)
}

/// Canonical rank used for the CP step of [`tucker_cp`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum CpRankPolicy {
    /// `min(r1, r2, r3)` of the Tucker core.
    #[default]
    MinTucker,
    Fixed(usize),
    /// Grow the rank from `min(r1, r2, r3)` until the CP fit of the core
    /// reaches the HOSVD tolerance; falls back to the exact slice model.
    Adaptive,
}

#[derive(Debug, Clone)]
pub struct TuckerCpConfig {
    pub tol: f64,
    pub rule: TruncationRule,
    pub cp_iters: usize,
    pub stall_tol: f64,
    pub rank: CpRankPolicy,
    pub restarts: usize,
    pub seed: u64,
}

impl TuckerCpConfig {
    pub fn new(tol: f64, cp_iters: usize) -> Self {
        Self {
            tol,
            rule: TruncationRule::Energy,
            cp_iters,
            stall_tol: 0.0,
            rank: CpRankPolicy::MinTucker,
            restarts: 0,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuckerCpOutcome {
    pub form: TuckerCpForm,
    pub stats: CompressionStats,
    /// Relative CP error on the Tucker core.
    pub core_error: f64,
    pub cp_sweeps: usize,
    pub warning: Option<String>,
}

/// Tucker+CP with the default policy (Energy rule, `r = min(r1, r2, r3)`).
pub fn tucker_cp(t: &Tensor3, tol: f64, cp_iters: usize) -> Result<TuckerCpOutcome> {
    tucker_cp_with(t, &TuckerCpConfig::new(tol, cp_iters))
}

pub fn tucker_cp_with(t: &Tensor3, cfg: &TuckerCpConfig) -> Result<TuckerCpOutcome> {
    let tucker = hosvd(t, cfg.tol, cfg.rule)?;
    let ranks = tucker.ranks();
    let min_rank = ranks.iter().copied().min().unwrap_or(0);
    let core_norm = tucker.core.frobenius_norm();

    let als = |rank: usize| {
        let mut c = CpAlsConfig::new(rank, cfg.cp_iters, cfg.stall_tol);
        c.restarts = cfg.restarts;
        c.seed = cfg.seed;
        cp_als_with(&tucker.core, &c)
    };

    let (cp, core_error, sweeps, warning): (CpForm, f64, usize, Option<String>) = if min_rank == 0 || core_norm == 0.0 {
        let factors = tucker.factors.clone().map(|u| u.columns(0, 0).into_owned());
        (CpForm { factors }, 0.0, 0, None)
    } else {
        match cfg.rank {
            CpRankPolicy::MinTucker => {
                let out = als(min_rank)?;
                (out.form, out.relative_error, out.sweeps, out.warning)
            }
            CpRankPolicy::Fixed(r) => {
                let out = als(r)?;
                (out.form, out.relative_error, out.sweeps, out.warning)
            }
            CpRankPolicy::Adaptive => {
                let mut sorted = ranks;
                sorted.sort_unstable();
                let cap = sorted[0] * sorted[1];
                let target = cfg.tol;
                let mut r = min_rank;
                let mut found = None;
                while r < cap {
                    let out = als(r)?;
                    if out.relative_error <= target {
                        found = Some((out.form, out.relative_error, out.sweeps, None));
                        break;
                    }
                    r = (r + 1).max((r as f64 * 1.25).ceil() as usize);
                }
                found.unwrap_or_else(|| {
                    let exact = slice_cp(&tucker.core);
                    (exact, 0.0, 0, None)
                })
            }
        }
    };

    let factors = [0, 1, 2].map(|q| &tucker.factors[q] * &cp.factors[q]);
    let form = TuckerCpForm {
        factors,
        tucker_ranks: ranks,
        rule: cfg.rule,
        tol: cfg.tol,
    };
    let stats = compression_stats_against(&form, t)?;
    Ok(TuckerCpOutcome {
        form,
        stats,
        core_error,
        cp_sweeps: sweeps,
        warning,
    })
}
