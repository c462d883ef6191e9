//! Tucker (HOSVD) and Tucker+CP compression of 3-way tensors.
//!
//! * [`hosvd`] truncates the SVD of every unfolding and projects the tensor
//!   onto the retained subspaces to form the core.
//! * [`cp_als`] fits a canonical polyadic model by alternating least squares.
//! * [`tucker_cp`] runs CP-ALS on the (small) Tucker core and merges the
//!   factors, `W_q = U_q V_q`.

mod cp;
mod hosvd;
mod svd;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{cp_reconstruct, tucker_reconstruct, FactorMatrix, Tensor3};

pub use cp::{cp_als, cp_als_with, slice_cp, CpAlsConfig, CpOutcome};
pub use hosvd::{hosvd, multilinear_rank, tucker_cp, tucker_cp_with, CpRankPolicy, TuckerCpConfig, TuckerCpOutcome};
pub use svd::{truncated_svd, TruncatedSvd, TruncationRule, TIE_WINDOW};

/// Tucker model `core x_1 U1 x_2 U2 x_3 U3` with orthonormal factors.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerForm {
    pub core: Tensor3,
    pub factors: [FactorMatrix; 3],
    pub rule: TruncationRule,
    pub tol: f64,
}

impl TuckerForm {
    pub fn ranks(&self) -> [usize; 3] {
        self.core.dims()
    }
}

/// Canonical polyadic model `sum_l v1_l o v2_l o v3_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpForm {
    pub factors: [FactorMatrix; 3],
}

impl CpForm {
    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }
}

/// Tucker+CP model: the CP factors of the core pushed through the Tucker
/// factors, `W_q = U_q V_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerCpForm {
    pub factors: [FactorMatrix; 3],
    /// Tucker ranks of the intermediate HOSVD step.
    pub tucker_ranks: [usize; 3],
    pub rule: TruncationRule,
    pub tol: f64,
}

impl TuckerCpForm {
    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }
}

/// Common view over the compressed representations.
pub trait Compressed {
    /// Dimensions of the represented tensor.
    fn dims(&self) -> [usize; 3];
    /// Rank triple (`(r, r, r)` for CP-type models).
    fn ranks(&self) -> [usize; 3];
    /// Number of complex scalars held by the representation.
    fn stored_elements(&self) -> usize;
    fn reconstruct(&self) -> Result<Tensor3>;
}

fn factor_dims(factors: &[FactorMatrix; 3]) -> [usize; 3] {
    [factors[0].nrows(), factors[1].nrows(), factors[2].nrows()]
}

fn factor_elements(factors: &[FactorMatrix; 3]) -> usize {
    factors.iter().map(|f| f.nrows() * f.ncols()).sum()
}

impl Compressed for TuckerForm {
    fn dims(&self) -> [usize; 3] {
        factor_dims(&self.factors)
    }
    fn ranks(&self) -> [usize; 3] {
        self.core.dims()
    }
    fn stored_elements(&self) -> usize {
        self.core.len() + factor_elements(&self.factors)
    }
    fn reconstruct(&self) -> Result<Tensor3> {
        tucker_reconstruct(&self.core, &self.factors[0], &self.factors[1], &self.factors[2])
    }
}

impl Compressed for CpForm {
    fn dims(&self) -> [usize; 3] {
        factor_dims(&self.factors)
    }
    fn ranks(&self) -> [usize; 3] {
        [self.rank(); 3]
    }
    fn stored_elements(&self) -> usize {
        factor_elements(&self.factors)
    }
    fn reconstruct(&self) -> Result<Tensor3> {
        cp_reconstruct(&self.factors[0], &self.factors[1], &self.factors[2])
    }
}

impl Compressed for TuckerCpForm {
    fn dims(&self) -> [usize; 3] {
        factor_dims(&self.factors)
    }
    fn ranks(&self) -> [usize; 3] {
        [self.rank(); 3]
    }
    fn stored_elements(&self) -> usize {
        factor_elements(&self.factors)
    }
    fn reconstruct(&self) -> Result<Tensor3> {
        cp_reconstruct(&self.factors[0], &self.factors[1], &self.factors[2])
    }
}

/// Storage accounting for one compressed tensor (or a sum over several).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionStats {
    pub original_elements: usize,
    pub compressed_elements: usize,
    pub compression_factor: f64,
    /// `||A - A~||_F / ||A||_F` when the original was available.
    pub achieved_relative_error: Option<f64>,
    pub ranks: [usize; 3],
}

impl CompressionStats {
    fn new(original_elements: usize, compressed_elements: usize, ranks: [usize; 3], err: Option<f64>) -> Self {
        Self {
            original_elements,
            compressed_elements,
            compression_factor: original_elements as f64 / compressed_elements as f64,
            achieved_relative_error: err,
            ranks,
        }
    }

    /// Aggregate several components: element counts add, ranks take the
    /// worst case, errors take the maximum.
    pub fn combine(parts: &[CompressionStats]) -> Option<CompressionStats> {
        let first = parts.first()?;
        let mut original = 0;
        let mut compressed = 0;
        let mut ranks = [0; 3];
        let mut err = first.achieved_relative_error;
        for p in parts {
            original += p.original_elements;
            compressed += p.compressed_elements;
            for q in 0..3 {
                ranks[q] = ranks[q].max(p.ranks[q]);
            }
            err = match (err, p.achieved_relative_error) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            };
        }
        Some(Self::new(original, compressed, ranks, err))
    }

    pub fn max_rank(&self) -> usize {
        self.ranks.iter().copied().max().unwrap_or(0)
    }
}

/// Counts the scalars stored by `form` against the `n1 n2 n3` dense original.
pub fn compression_stats(form: &dyn Compressed, original_dims: [usize; 3]) -> CompressionStats {
    let original = original_dims.iter().product();
    CompressionStats::new(original, form.stored_elements(), form.ranks(), None)
}

/// Like [`compression_stats`], also measuring the reconstruction error.
pub fn compression_stats_against(form: &dyn Compressed, original: &Tensor3) -> Result<CompressionStats> {
    let err = form.reconstruct()?.relative_error(original)?;
    let mut stats = compression_stats(form, original.dims());
    stats.achieved_relative_error = Some(err);
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor3;

    #[test]
    fn stats_rank_one_on_100_cubed() {
        let form = TuckerForm {
            core: Tensor3::zeros([1, 1, 1]),
            factors: [FactorMatrix::zeros(100, 1), FactorMatrix::zeros(100, 1), FactorMatrix::zeros(100, 1)],
            rule: TruncationRule::Energy,
            tol: 1e-6,
        };
        let stats = compression_stats(&form, [100, 100, 100]);
        assert_eq!(stats.compressed_elements, 301);
        assert!((stats.compression_factor - 1e6 / 301.0).abs() < 1e-9);
        assert!((stats.compression_factor - 3322.259).abs() < 1e-3);
    }

    #[test]
    fn stats_full_rank_expands() {
        let form = TuckerForm {
            core: Tensor3::zeros([4, 4, 4]),
            factors: [FactorMatrix::zeros(4, 4), FactorMatrix::zeros(4, 4), FactorMatrix::zeros(4, 4)],
            rule: TruncationRule::Energy,
            tol: 0.0,
        };
        let stats = compression_stats(&form, [4, 4, 4]);
        assert_eq!(stats.compressed_elements, 64 + 48);
        assert!(stats.compression_factor < 1.0);
    }

    #[test]
    fn combine_sums_counts() {
        let a = CompressionStats::new(100, 10, [1, 2, 3], Some(1e-3));
        let b = CompressionStats::new(100, 30, [3, 1, 1], Some(1e-4));
        let c = CompressionStats::combine(&[a, b]).unwrap();
        assert_eq!(c.original_elements, 200);
        assert_eq!(c.compressed_elements, 40);
        assert_eq!(c.ranks, [3, 2, 3]);
        assert_eq!(c.max_rank(), 3);
        assert_eq!(c.achieved_relative_error, Some(1e-3));
        assert!((c.compression_factor - 5.0).abs() < 1e-15);
    }
}
