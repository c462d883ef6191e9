//! Dense complex 3-way tensors and the multilinear primitives the
//! decompositions are built on.
//!
//! Storage is axis-1 fastest: entry `(i, j, k)` of an `n1 x n2 x n3` tensor
//! lives at `i + n1 * (j + n2 * k)`. The mode unfoldings use the matching
//! column orderings (0-based):
//!
//! | mode | shape              | column of entry `(i, j, k)` |
//! |------|--------------------|-----------------------------|
//! | 1    | `n1 x (n2 * n3)`   | `j + n2 * k`                |
//! | 2    | `n2 x (n1 * n3)`   | `i + n1 * k`                |
//! | 3    | `n3 x (n1 * n2)`   | `i + n1 * j`                |
//!
//! With this choice the mode-1 and mode-3 unfoldings are plain
//! reinterpretations of the linear buffer, which the n-mode products exploit.

use nalgebra::{DMatrix, DMatrixView};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Factor matrix of a Tucker or CP model. Columns are mode vectors.
pub type FactorMatrix = DMatrix<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
#[cfg(test)]
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Tensor mode (axis), 1-based as in the usual multilinear algebra notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    /// Zero-based axis index.
    pub fn axis(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }
}

impl TryFrom<usize> for Mode {
    type Error = Error;

    fn try_from(mode: usize) -> Result<Self> {
        match mode {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            other => Err(Error::InvalidMode(other)),
        }
    }
}

/// Dense complex tensor of order three.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<Complex64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![ZERO; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<Complex64>) -> Result<Self> {
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "buffer of length {} for dims {:?} (expected {expected})",
                data.len(),
                dims
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    pub fn filled(dims: [usize; 3], value: Complex64) -> Self {
        Self {
            dims,
            data: vec![value; dims[0] * dims[1] * dims[2]],
        }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.data[self.linear_index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: Complex64) {
        let idx = self.linear_index(i, j, k);
        self.data[idx] = value;
    }

    /// Tensor Frobenius norm, `(sum |t_ijk|^2)^(1/2)`.
    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&mut self, factor: Complex64) {
        for z in &mut self.data {
            *z *= factor;
        }
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut out = self.clone();
        out.scale(factor);
        out
    }

    pub fn conj(&self) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &Tensor3) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    /// `||self - other||_F / ||other||_F` (absolute difference if `other` is zero).
    pub fn relative_error(&self, reference: &Tensor3) -> Result<f64> {
        let diff = self.sub(reference)?.frobenius_norm();
        let norm = reference.frobenius_norm();
        Ok(if norm == 0.0 { diff } else { diff / norm })
    }

    /// Entrywise (Hadamard) product.
    pub fn hadamard(&self, other: &Tensor3) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        })
    }

    fn check_same_dims(&self, other: &Tensor3) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Mode-`q` unfolding as a freshly allocated `n_q x (N / n_q)` matrix.
    pub fn unfold(&self, mode: Mode) -> FactorMatrix {
        let [n1, n2, n3] = self.dims;
        match mode {
            Mode::One => DMatrix::from_column_slice(n1, n2 * n3, &self.data),
            Mode::Two => {
                let mut m = DMatrix::from_element(n2, n1 * n3, ZERO);
                for k in 0..n3 {
                    for j in 0..n2 {
                        for i in 0..n1 {
                            m[(j, i + n1 * k)] = self.get(i, j, k);
                        }
                    }
                }
                m
            }
            Mode::Three => DMatrix::from_row_slice(n3, n1 * n2, &self.data),
        }
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn fold(matrix: &FactorMatrix, mode: Mode, dims: [usize; 3]) -> Result<Self> {
        let [n1, n2, n3] = dims;
        let axis = mode.axis();
        let expected = (dims[axis], n1 * n2 * n3 / dims[axis].max(1));
        if (matrix.nrows(), matrix.ncols()) != expected || dims[axis] == 0 {
            return Err(Error::DimensionMismatch(format!(
                "cannot fold a {}x{} matrix along mode {} into {:?}",
                matrix.nrows(),
                matrix.ncols(),
                axis + 1,
                dims
            )));
        }
        let mut t = Tensor3::zeros(dims);
        match mode {
            Mode::One => t.data.copy_from_slice(matrix.as_slice()),
            Mode::Two => {
                for k in 0..n3 {
                    for j in 0..n2 {
                        for i in 0..n1 {
                            t.set(i, j, k, matrix[(j, i + n1 * k)]);
                        }
                    }
                }
            }
            Mode::Three => {
                let cols = n1 * n2;
                for c in 0..cols {
                    for k in 0..n3 {
                        t.data[c + cols * k] = matrix[(k, c)];
                    }
                }
            }
        }
        Ok(t)
    }

    /// n-mode product `self x_q u`: contracts axis `q` of the tensor with the
    /// columns of `u` (`u` is `p x n_q`, the result has `n_q` replaced by `p`).
    pub fn n_mode_product(&self, u: &FactorMatrix, mode: Mode) -> Result<Self> {
        let axis = mode.axis();
        if u.ncols() != self.dims[axis] {
            return Err(Error::DimensionMismatch(format!(
                "mode-{} product of {:?} tensor with a {}x{} matrix",
                axis + 1,
                self.dims,
                u.nrows(),
                u.ncols()
            )));
        }
        let [n1, n2, n3] = self.dims;
        let p = u.nrows();
        let mut out_dims = self.dims;
        out_dims[axis] = p;
        let mut out = Tensor3::zeros(out_dims);
        if out.is_empty() || self.is_empty() {
            return Ok(out);
        }
        match mode {
            Mode::One => {
                let a = DMatrixView::from_slice(&self.data, n1, n2 * n3);
                let b = u * a;
                out.data.copy_from_slice(b.as_slice());
            }
            Mode::Two => {
                let ut = u.transpose();
                for k in 0..n3 {
                    let slab = DMatrixView::from_slice(&self.data[n1 * n2 * k..n1 * n2 * (k + 1)], n1, n2);
                    let b = slab * &ut;
                    out.data[n1 * p * k..n1 * p * (k + 1)].copy_from_slice(b.as_slice());
                }
            }
            Mode::Three => {
                let a = DMatrixView::from_slice(&self.data, n1 * n2, n3);
                let b = a * u.transpose();
                out.data.copy_from_slice(b.as_slice());
            }
        }
        Ok(out)
    }
}

/// Euclidean norm of a complex vector.
pub fn norm2(values: &[Complex64]) -> f64 {
    // Scaled accumulation keeps tiny and huge entries from under/overflowing.
    let scale = values.iter().fold(0.0_f64, |m, z| m.max(z.re.abs()).max(z.im.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let sum: f64 = values
        .iter()
        .map(|z| {
            let (re, im) = (z.re / scale, z.im / scale);
            re * re + im * im
        })
        .sum();
    scale * sum.sqrt()
}

/// `core x_1 u1 x_2 u2 x_3 u3`, evaluated as three successive n-mode products.
pub fn tucker_reconstruct(
    core: &Tensor3,
    u1: &FactorMatrix,
    u2: &FactorMatrix,
    u3: &FactorMatrix,
) -> Result<Tensor3> {
    core.n_mode_product(u1, Mode::One)?
        .n_mode_product(u2, Mode::Two)?
        .n_mode_product(u3, Mode::Three)
}

/// Sum of the outer products of matching factor columns.
pub fn cp_reconstruct(v1: &FactorMatrix, v2: &FactorMatrix, v3: &FactorMatrix) -> Result<Tensor3> {
    let r = v1.ncols();
    if v2.ncols() != r || v3.ncols() != r {
        return Err(Error::DimensionMismatch(format!(
            "CP factors with {}, {} and {} columns",
            v1.ncols(),
            v2.ncols(),
            v3.ncols()
        )));
    }
    let (n1, n2, n3) = (v1.nrows(), v2.nrows(), v3.nrows());
    let mut t = Tensor3::zeros([n1, n2, n3]);
    let mut weights = vec![ZERO; r];
    for k in 0..n3 {
        for j in 0..n2 {
            for (l, w) in weights.iter_mut().enumerate() {
                *w = v2[(j, l)] * v3[(k, l)];
            }
            let base = n1 * (j + n2 * k);
            for (l, &w) in weights.iter().enumerate() {
                let col = v1.column(l);
                for (dst, a) in t.data[base..base + n1].iter_mut().zip(col.iter()) {
                    *dst += a * w;
                }
            }
        }
    }
    Ok(t)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Tensor3 {
        Tensor3::from_fn(dims, |_, _, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    pub(crate) fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> FactorMatrix {
        DMatrix::from_fn(rows, cols, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    /// Direct evaluation of the Tucker triple sum, entry by entry.
    fn tucker_brute_force(core: &Tensor3, u1: &FactorMatrix, u2: &FactorMatrix, u3: &FactorMatrix) -> Tensor3 {
        let [r1, r2, r3] = core.dims();
        Tensor3::from_fn([u1.nrows(), u2.nrows(), u3.nrows()], |i, j, k| {
            let mut s = ZERO;
            for a in 0..r1 {
                for b in 0..r2 {
                    for g in 0..r3 {
                        s += core.get(a, b, g) * u1[(i, a)] * u2[(j, b)] * u3[(k, g)];
                    }
                }
            }
            s
        })
    }

    #[test]
    fn frobenius_norm_examples() {
        let ones = Tensor3::filled([2, 2, 2], ONE);
        assert!((ones.frobenius_norm() - 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(Tensor3::zeros([5, 3, 2]).frobenius_norm(), 0.0);
        let mut t = Tensor3::zeros([2, 3, 2]);
        t.set(1, 2, 0, c(3.0, 4.0));
        assert!((t.frobenius_norm() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_mode_is_rejected() {
        assert!(matches!(Mode::try_from(0), Err(Error::InvalidMode(0))));
        assert!(matches!(Mode::try_from(4), Err(Error::InvalidMode(4))));
        assert_eq!(Mode::try_from(2).unwrap(), Mode::Two);
    }

    #[test]
    fn unfold_shapes() {
        let t = Tensor3::zeros([2, 3, 4]);
        let m1 = t.unfold(Mode::One);
        assert_eq!((m1.nrows(), m1.ncols()), (2, 12));
        let m2 = t.unfold(Mode::Two);
        assert_eq!((m2.nrows(), m2.ncols()), (3, 8));
        let m3 = t.unfold(Mode::Three);
        assert_eq!((m3.nrows(), m3.ncols()), (4, 6));
    }

    #[test]
    fn unfold_enumerated_2x2x2() {
        // Entry value = its linear position in the buffer.
        let t = Tensor3::from_vec([2, 2, 2], (0..8).map(|v| c(v as f64, 0.0)).collect()).unwrap();
        // Mode 1: row i, column j + 2k.
        let m1 = t.unfold(Mode::One);
        let expected1 = [[0.0, 2.0, 4.0, 6.0], [1.0, 3.0, 5.0, 7.0]];
        // Mode 2: row j, column i + 2k.
        let m2 = t.unfold(Mode::Two);
        let expected2 = [[0.0, 1.0, 4.0, 5.0], [2.0, 3.0, 6.0, 7.0]];
        // Mode 3: row k, column i + 2j.
        let m3 = t.unfold(Mode::Three);
        let expected3 = [[0.0, 1.0, 2.0, 3.0], [4.0, 5.0, 6.0, 7.0]];
        for r in 0..2 {
            for col in 0..4 {
                assert_eq!(m1[(r, col)].re, expected1[r][col]);
                assert_eq!(m2[(r, col)].re, expected2[r][col]);
                assert_eq!(m3[(r, col)].re, expected3[r][col]);
            }
        }
    }

    #[test]
    fn fold_rejects_wrong_shape() {
        let m = DMatrix::from_element(2, 5, ONE);
        assert!(Tensor3::fold(&m, Mode::One, [2, 2, 2]).is_err());
    }

    #[test]
    fn n_mode_product_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_tensor(&mut rng, [3, 2, 4]);
        for mode in Mode::ALL {
            let n = t.dims()[mode.axis()];
            let id = DMatrix::identity(n, n);
            assert_eq!(t.n_mode_product(&id, mode).unwrap(), t);
            let zero = DMatrix::from_element(2, n, ZERO);
            let z = t.n_mode_product(&zero, mode).unwrap();
            assert_eq!(z.frobenius_norm(), 0.0);
            assert_eq!(z.dims()[mode.axis()], 2);
        }

        // [1, 1] along mode 1 sums the two mode-1 fibres entries pairwise.
        let t = Tensor3::from_vec([2, 2, 2], (0..8).map(|v| c(v as f64, 1.0)).collect()).unwrap();
        let sum = DMatrix::from_element(1, 2, ONE);
        let p = t.n_mode_product(&sum, Mode::One).unwrap();
        assert_eq!(p.dims(), [1, 2, 2]);
        for k in 0..2 {
            for j in 0..2 {
                assert_eq!(p.get(0, j, k), t.get(0, j, k) + t.get(1, j, k));
            }
        }
    }

    #[test]
    fn n_mode_product_dimension_mismatch() {
        let t = Tensor3::zeros([2, 3, 4]);
        let u = DMatrix::from_element(2, 2, ONE);
        assert!(matches!(t.n_mode_product(&u, Mode::Two), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn tucker_reconstruct_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Rank-1 core gives s * (u o v o w).
        let s = c(0.5, -2.0);
        let core = Tensor3::filled([1, 1, 1], s);
        let (u, v, w) = (random_matrix(&mut rng, 3, 1), random_matrix(&mut rng, 2, 1), random_matrix(&mut rng, 4, 1));
        let t = tucker_reconstruct(&core, &u, &v, &w).unwrap();
        for k in 0..4 {
            for j in 0..2 {
                for i in 0..3 {
                    let want = s * u[(i, 0)] * v[(j, 0)] * w[(k, 0)];
                    assert!((t.get(i, j, k) - want).norm() < 1e-15);
                }
            }
        }
        // Identity factors reproduce the core.
        let core = random_tensor(&mut rng, [3, 2, 4]);
        let t = tucker_reconstruct(&core, &DMatrix::identity(3, 3), &DMatrix::identity(2, 2), &DMatrix::identity(4, 4)).unwrap();
        assert_eq!(t, core);
        // Random 2x2x2 core with 3x2 factors against the triple sum.
        let core = random_tensor(&mut rng, [2, 2, 2]);
        let (u1, u2, u3) = (random_matrix(&mut rng, 3, 2), random_matrix(&mut rng, 3, 2), random_matrix(&mut rng, 3, 2));
        let fast = tucker_reconstruct(&core, &u1, &u2, &u3).unwrap();
        let slow = tucker_brute_force(&core, &u1, &u2, &u3);
        assert!(fast.relative_error(&slow).unwrap() < 1e-14);
    }

    #[test]
    fn cp_reconstruct_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b, cc) = (random_matrix(&mut rng, 3, 2), random_matrix(&mut rng, 4, 2), random_matrix(&mut rng, 2, 2));
        let t = cp_reconstruct(&a, &b, &cc).unwrap();
        let rank1 = |l: usize| {
            Tensor3::from_fn([3, 4, 2], |i, j, k| a[(i, l)] * b[(j, l)] * cc[(k, l)])
        };
        let want = rank1(0).add(&rank1(1)).unwrap();
        assert!(t.relative_error(&want).unwrap() < 1e-15);

        let single = cp_reconstruct(&a.columns(0, 1).into_owned(), &b.columns(0, 1).into_owned(), &cc.columns(0, 1).into_owned()).unwrap();
        assert!(single.relative_error(&rank1(0)).unwrap() < 1e-15);

        let empty = cp_reconstruct(&DMatrix::zeros(3, 0), &DMatrix::zeros(4, 0), &DMatrix::zeros(2, 0)).unwrap();
        assert_eq!(empty.dims(), [3, 4, 2]);
        assert_eq!(empty.frobenius_norm(), 0.0);

        assert!(cp_reconstruct(&a, &b, &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn hadamard_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_tensor(&mut rng, [2, 3, 2]);
        assert_eq!(a.hadamard(&Tensor3::filled([2, 3, 2], ONE)).unwrap(), a);
        assert_eq!(a.hadamard(&Tensor3::zeros([2, 3, 2])).unwrap().frobenius_norm(), 0.0);
        let x = Tensor3::from_vec([2, 1, 1], vec![c(1.0, 0.0), c(0.0, 2.0)]).unwrap();
        let y = Tensor3::from_vec([2, 1, 1], vec![c(3.0, 0.0), c(4.0, 0.0)]).unwrap();
        assert_eq!(x.hadamard(&y).unwrap().data(), &[c(3.0, 0.0), c(0.0, 8.0)]);
        assert!(a.hadamard(&x).is_err());
    }

    fn dims_strategy() -> impl Strategy<Value = [usize; 3]> {
        (1usize..6, 1usize..6, 1usize..6).prop_map(|(a, b, c)| [a, b, c])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fold_unfold_round_trip(dims in dims_strategy(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tensor(&mut rng, dims);
            for mode in Mode::ALL {
                let back = Tensor3::fold(&t.unfold(mode), mode, dims).unwrap();
                prop_assert_eq!(&back, &t);
                let m = t.unfold(mode);
                let mat_norm = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                let norm = t.frobenius_norm();
                prop_assert!((mat_norm - norm).abs() <= 1e-14 * norm.max(1e-300));
            }
        }

        #[test]
        fn distinct_mode_products_commute(dims in dims_strategy(), p in 1usize..4, q in 1usize..4, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tensor(&mut rng, dims);
            for (ma, mb) in [(Mode::One, Mode::Two), (Mode::One, Mode::Three), (Mode::Two, Mode::Three)] {
                let u = random_matrix(&mut rng, p, dims[ma.axis()]);
                let v = random_matrix(&mut rng, q, dims[mb.axis()]);
                let ab = t.n_mode_product(&u, ma).unwrap().n_mode_product(&v, mb).unwrap();
                let ba = t.n_mode_product(&v, mb).unwrap().n_mode_product(&u, ma).unwrap();
                prop_assert!(ab.relative_error(&ba).unwrap() <= 1e-14);
            }
        }

        #[test]
        fn tucker_matches_triple_sum(n in prop::array::uniform3(1usize..5), r in prop::array::uniform3(1usize..4), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let core = random_tensor(&mut rng, r);
            let u1 = random_matrix(&mut rng, n[0], r[0]);
            let u2 = random_matrix(&mut rng, n[1], r[1]);
            let u3 = random_matrix(&mut rng, n[2], r[2]);
            let fast = tucker_reconstruct(&core, &u1, &u2, &u3).unwrap();
            let slow = tucker_brute_force(&core, &u1, &u2, &u3);
            prop_assert!(fast.relative_error(&slow).unwrap() <= 1e-13);
        }
    }
}
