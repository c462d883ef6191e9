//! Block-Toeplitz operators applied through circulant embedding and FFTs,
//! with the Fourier-domain multipliers held densely or in compressed form.
//!
//! A defining tensor `T` (offset = source - test, non-negative offsets only)
//! is embedded per axis into length `2n`:
//!
//! ```text
//! e[i] = T[i]           0 <= i < n
//! e[n] = 0
//! e[2n - i] = s T[i]    1 <= i < n      (s = -1 on odd axes)
//! ```
//!
//! The Toeplitz product `y_n = sum_m T(m - n) x_m` is then a circular
//! convolution with `p e`, `p` the product of the per-axis signs, so the
//! Fourier multiplier of a component is `p DFT(e)`.

mod bench;
mod dft;

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::assembly::{Axis, KernelComponent, OperatorKind};
use crate::decomp::{
    compression_stats_against, hosvd, tucker_cp_with, CompressionStats, TruncationRule, TuckerCpConfig,
    TuckerCpForm, TuckerForm,
};
use crate::error::{Error, Result};
use crate::tensor::{FactorMatrix, Tensor3};

pub use bench::{matvec_bench, operator_bench, product_flops, BenchRecord};
pub use dft::Dft3;

/// Per-axis parity flags, `true` where the entries are odd.
pub type Parity = [bool; 3];

fn parity_sign(parity: Parity) -> f64 {
    if parity.iter().filter(|&&odd| odd).count() % 2 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// Source index and sign of embedded position `i` along an axis of size `n`.
#[inline]
fn fold_index(i: usize, n: usize, odd: bool) -> Option<(usize, f64)> {
    if i < n {
        Some((i, 1.0))
    } else if i == n {
        None
    } else {
        Some((2 * n - i, if odd { -1.0 } else { 1.0 }))
    }
}

/// Doubles every axis of `t` with parity-signed reflections.
pub fn circulant_embed(t: &Tensor3, parity: Parity) -> Tensor3 {
    let n = t.dims();
    let dims = n.map(|v| 2 * v);
    let mut out = Tensor3::zeros(dims);
    for k in 0..dims[2] {
        let Some((kk, sk)) = fold_index(k, n[2], parity[2]) else { continue };
        for j in 0..dims[1] {
            let Some((jj, sj)) = fold_index(j, n[1], parity[1]) else { continue };
            for i in 0..dims[0] {
                let Some((ii, si)) = fold_index(i, n[0], parity[0]) else { continue };
                out.set(i, j, k, t.get(ii, jj, kk) * (si * sj * sk));
            }
        }
    }
    out
}

/// Embeds and 1D-transforms every column of `u` (rows `n` -> `2n`).
fn transform_matrix(u: &FactorMatrix, odd: bool) -> FactorMatrix {
    let n = u.nrows();
    let mut out = FactorMatrix::zeros(2 * n, u.ncols());
    let mut col = vec![Complex64::default(); 2 * n];
    for c in 0..u.ncols() {
        for (i, slot) in col.iter_mut().enumerate() {
            *slot = match fold_index(i, n, odd) {
                Some((src, s)) => u[(src, c)] * s,
                None => Complex64::default(),
            };
        }
        dft::dft_1d(&mut col, FftDirection::Forward);
        out.column_mut(c).copy_from_slice(&col);
    }
    out
}

/// Fourier-domain Tucker factors: the core is untouched.
pub fn transform_tucker_factors(form: &TuckerForm, parity: Parity) -> TuckerForm {
    TuckerForm {
        core: form.core.clone(),
        factors: [0, 1, 2].map(|q| transform_matrix(&form.factors[q], parity[q])),
        rule: form.rule,
        tol: form.tol,
    }
}

/// Fourier-domain Tucker+CP factors.
pub fn transform_cp_factors(form: &TuckerCpForm, parity: Parity) -> TuckerCpForm {
    TuckerCpForm {
        factors: [0, 1, 2].map(|q| transform_matrix(&form.factors[q], parity[q])),
        tucker_ranks: form.tucker_ranks,
        rule: form.rule,
        tol: form.tol,
    }
}

/// How the element-wise product of one component is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatvecStrategy {
    /// Uncompressed spectrum.
    Dense,
    /// Tucker spectrum expanded into the shared buffer.
    HosvdDecompress,
    /// Tucker spectrum evaluated entry by entry (6D loop).
    HosvdLoop,
    /// Tucker+CP spectrum expanded into the shared buffer.
    TuckerCpDecompress,
    /// Tucker+CP spectrum evaluated entry by entry (4D loop).
    TuckerCpLoop,
}

impl MatvecStrategy {
    pub const ALL: [MatvecStrategy; 5] = [
        MatvecStrategy::Dense,
        MatvecStrategy::HosvdDecompress,
        MatvecStrategy::HosvdLoop,
        MatvecStrategy::TuckerCpDecompress,
        MatvecStrategy::TuckerCpLoop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MatvecStrategy::Dense => "dense",
            MatvecStrategy::HosvdDecompress => "hosvd_decompress",
            MatvecStrategy::HosvdLoop => "hosvd_loop",
            MatvecStrategy::TuckerCpDecompress => "tucker_cp_decompress",
            MatvecStrategy::TuckerCpLoop => "tucker_cp_loop",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy '{s}'")))
    }

    pub fn needs_buffer(self) -> bool {
        matches!(self, MatvecStrategy::HosvdDecompress | MatvecStrategy::TuckerCpDecompress)
    }
}

/// Memory the caller grants the element-wise product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScratchPolicy {
    /// One embedded-grid-sized buffer shared by all components.
    SharedBuffer,
    /// No decompression buffer.
    NoBuffer,
}

impl ScratchPolicy {
    pub fn name(self) -> &'static str {
        match self {
            ScratchPolicy::SharedBuffer => "shared_buffer",
            ScratchPolicy::NoBuffer => "no_buffer",
        }
    }

    /// The least memory `strategy` can run with.
    pub fn minimal_for(strategy: MatvecStrategy) -> Self {
        if strategy.needs_buffer() {
            ScratchPolicy::SharedBuffer
        } else {
            ScratchPolicy::NoBuffer
        }
    }
}

/// Three PWC current coefficient components on the grid, stored
/// component-major (`x` block, then `y`, then `z`).
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentField {
    dims: [usize; 3],
    data: Vec<Complex64>,
}

impl CurrentField {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![Complex64::default(); 3 * dims.iter().product::<usize>()],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<Complex64>) -> Result<Self> {
        let n = 3 * dims.iter().product::<usize>();
        if data.len() != n {
            return Err(Error::DimensionMismatch(format!("field of {dims:?} needs {n} values, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn from_components(components: [&Tensor3; 3]) -> Result<Self> {
        let dims = components[0].dims();
        if components.iter().any(|c| c.dims() != dims) {
            return Err(Error::DimensionMismatch("field components differ in size".into()));
        }
        let mut data = Vec::with_capacity(3 * components[0].len());
        for c in components {
            data.extend_from_slice(c.data());
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn component(&self, axis: Axis) -> &[Complex64] {
        let n = self.voxels();
        &self.data[axis.index() * n..(axis.index() + 1) * n]
    }

    pub fn component_mut(&mut self, axis: Axis) -> &mut [Complex64] {
        let n = self.voxels();
        &mut self.data[axis.index() * n..(axis.index() + 1) * n]
    }

    pub fn component_tensor(&self, axis: Axis) -> Tensor3 {
        Tensor3::from_vec(self.dims, self.component(axis).to_vec()).expect("component length matches dims")
    }

    pub fn norm(&self) -> f64 {
        crate::tensor::norm2(&self.data)
    }
}

/// One way a stored component enters the 3x3 block operator: block
/// `(row, col)` is `symmetry` times the stored tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Usage {
    pub row: usize,
    pub col: usize,
    pub symmetry: f64,
}

/// Blocks filled by a stored component. With `expand` the symmetric
/// (N, `+`) or antisymmetric (K, `-`) partner block is included and the
/// scalar kernel acts on all three field components.
pub fn usages(comp: KernelComponent, expand: bool) -> Vec<Usage> {
    let (q, p) = (comp.row.index(), comp.col.index());
    if comp.is_identically_zero() {
        return Vec::new();
    }
    let u = |row, col, symmetry| Usage { row, col, symmetry };
    match (comp.operator, expand) {
        (OperatorKind::ScalarG, true) => (0..3).map(|a| u(a, a, 1.0)).collect(),
        (_, false) => vec![u(q, p, 1.0)],
        (OperatorKind::N, true) if q == p => vec![u(q, q, 1.0)],
        (OperatorKind::N, true) => vec![u(q, p, 1.0), u(p, q, 1.0)],
        (OperatorKind::K, true) => vec![u(q, p, 1.0), u(p, q, -1.0)],
    }
}

/// Which Fourier-domain forms to build.
#[derive(Debug, Clone, Default)]
pub struct SpectrumForms {
    pub dense: bool,
    /// HOSVD tolerance and truncation rule.
    pub tucker: Option<(f64, TruncationRule)>,
    pub tucker_cp: Option<TuckerCpConfig>,
}

impl SpectrumForms {
    pub fn dense() -> Self {
        Self {
            dense: true,
            ..Self::default()
        }
    }

    /// Forms needed by `strategy`, compressing at `tol`.
    pub fn for_strategy(strategy: MatvecStrategy, tol: f64, rule: TruncationRule, cp: &TuckerCpConfig) -> Self {
        match strategy {
            MatvecStrategy::Dense => Self::dense(),
            MatvecStrategy::HosvdDecompress | MatvecStrategy::HosvdLoop => Self {
                tucker: Some((tol, rule)),
                ..Self::default()
            },
            MatvecStrategy::TuckerCpDecompress | MatvecStrategy::TuckerCpLoop => {
                let mut cfg = cp.clone();
                cfg.tol = tol;
                cfg.rule = rule;
                Self {
                    tucker_cp: Some(cfg),
                    ..Self::default()
                }
            }
        }
    }
}

/// Fourier-domain data of one stored component.
#[derive(Debug, Clone)]
pub struct ComponentSpectrum {
    pub component: KernelComponent,
    pub parity: Parity,
    pub uses: Vec<Usage>,
    pub dense: Option<Tensor3>,
    pub tucker: Option<TuckerForm>,
    pub tucker_cp: Option<TuckerCpForm>,
    /// Compression statistics of the grid-sized tensor, per form.
    pub tucker_stats: Option<CompressionStats>,
    pub tucker_cp_stats: Option<CompressionStats>,
}

/// The embedded, transformed operator.
#[derive(Debug, Clone)]
pub struct EmbeddedSpectrum {
    grid_dims: [usize; 3],
    dims: [usize; 3],
    components: Vec<ComponentSpectrum>,
    dft: Dft3,
}

impl EmbeddedSpectrum {
    /// Builds the requested forms of every component. `expand` adds the
    /// symmetry partners of each stored component (see [`usages`]).
    pub fn new(grid_dims: [usize; 3], comps: &[(KernelComponent, Tensor3)], forms: &SpectrumForms, expand: bool) -> Result<Self> {
        if grid_dims.contains(&0) {
            return Err(Error::DegenerateDims(grid_dims));
        }
        let dims = grid_dims.map(|n| 2 * n);
        let dft = Dft3::new(dims);
        let mut components: Vec<ComponentSpectrum> = Vec::with_capacity(comps.len());
        let mut sorted: Vec<&(KernelComponent, Tensor3)> = comps.iter().collect();
        sorted.sort_by_key(|(c, _)| (c.row, c.col));
        for (comp, t) in sorted {
            if t.dims() != grid_dims {
                return Err(Error::DimensionMismatch(format!(
                    "component {comp} has dims {:?}, grid is {grid_dims:?}",
                    t.dims()
                )));
            }
            let parity = comp.parity();
            let dense = if forms.dense {
                let mut e = circulant_embed(t, parity);
                dft.forward(e.data_mut());
                Some(e)
            } else {
                None
            };
            let (tucker, tucker_stats) = match forms.tucker {
                Some((tol, rule)) => {
                    let h = hosvd(t, tol, rule)?;
                    let stats = compression_stats_against(&h, t)?;
                    (Some(transform_tucker_factors(&h, parity)), Some(stats))
                }
                None => (None, None),
            };
            let (tucker_cp, tucker_cp_stats) = match &forms.tucker_cp {
                Some(cfg) => {
                    let out = tucker_cp_with(t, cfg)?;
                    let stats = compression_stats_against(&out.form, t)?;
                    (Some(transform_cp_factors(&out.form, parity)), Some(stats))
                }
                None => (None, None),
            };
            components.push(ComponentSpectrum {
                component: *comp,
                parity,
                uses: usages(*comp, expand),
                dense,
                tucker,
                tucker_cp,
                tucker_stats,
                tucker_cp_stats,
            });
        }
        Ok(Self {
            grid_dims,
            dims,
            components,
            dft,
        })
    }

    pub fn grid_dims(&self) -> [usize; 3] {
        self.grid_dims
    }

    /// Embedded (doubled) dimensions.
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn components(&self) -> &[ComponentSpectrum] {
        &self.components
    }

    fn check_strategy(&self, strategy: MatvecStrategy) -> Result<()> {
        for c in &self.components {
            let present = match strategy {
                MatvecStrategy::Dense => c.dense.is_some(),
                MatvecStrategy::HosvdDecompress | MatvecStrategy::HosvdLoop => c.tucker.is_some(),
                MatvecStrategy::TuckerCpDecompress | MatvecStrategy::TuckerCpLoop => c.tucker_cp.is_some(),
            };
            if !present {
                return Err(Error::MissingForm(match strategy {
                    MatvecStrategy::Dense => "dense",
                    MatvecStrategy::HosvdDecompress | MatvecStrategy::HosvdLoop => "tucker",
                    _ => "tucker+cp",
                }));
            }
        }
        Ok(())
    }
}

/// Caller-owned buffers for [`apply_operator_with`].
#[derive(Debug, Clone)]
pub struct Workspace {
    policy: ScratchPolicy,
    inputs: Vec<Vec<Complex64>>,
    outputs: Vec<Vec<Complex64>>,
    buffer: Option<Vec<Complex64>>,
}

impl Workspace {
    pub fn new(op: &EmbeddedSpectrum, policy: ScratchPolicy) -> Self {
        let m = op.dft.len();
        Self {
            policy,
            inputs: vec![vec![Complex64::default(); m]; 3],
            outputs: vec![vec![Complex64::default(); m]; 3],
            buffer: match policy {
                ScratchPolicy::SharedBuffer => Some(vec![Complex64::default(); m]),
                ScratchPolicy::NoBuffer => None,
            },
        }
    }

    pub fn policy(&self) -> ScratchPolicy {
        self.policy
    }
}

/// `y = A x` for the block-Toeplitz operator `op`.
pub fn apply_operator(op: &EmbeddedSpectrum, x: &CurrentField, strategy: MatvecStrategy, scratch: ScratchPolicy) -> Result<CurrentField> {
    let mut ws = Workspace::new(op, scratch);
    apply_operator_with(op, x, strategy, &mut ws)
}

/// As [`apply_operator`] with reusable buffers.
pub fn apply_operator_with(
    op: &EmbeddedSpectrum,
    x: &CurrentField,
    strategy: MatvecStrategy,
    ws: &mut Workspace,
) -> Result<CurrentField> {
    if x.dims() != op.grid_dims {
        return Err(Error::DimensionMismatch(format!(
            "field dims {:?} vs operator grid {:?}",
            x.dims(),
            op.grid_dims
        )));
    }
    if strategy.needs_buffer() && ws.policy == ScratchPolicy::NoBuffer {
        return Err(Error::ScratchPolicy {
            policy: ws.policy.name(),
            strategy: strategy.name(),
        });
    }
    op.check_strategy(strategy)?;
    let n = op.grid_dims;
    let dims = op.dims;
    let m = op.dft.len();

    let mut used_in = [false; 3];
    let mut used_out = [false; 3];
    for c in &op.components {
        for u in &c.uses {
            used_in[u.col] = true;
            used_out[u.row] = true;
        }
    }
    for (q, buf) in ws.inputs.iter_mut().enumerate() {
        if !used_in[q] {
            continue;
        }
        buf.iter_mut().for_each(|v| *v = Complex64::default());
        let src = x.component(Axis::ALL[q]);
        for k in 0..n[2] {
            for j in 0..n[1] {
                let dst = dims[0] * (j + dims[1] * k);
                let s = n[0] * (j + n[1] * k);
                buf[dst..dst + n[0]].copy_from_slice(&src[s..s + n[0]]);
            }
        }
        op.dft.forward_padded(buf, n);
    }
    for out in ws.outputs.iter_mut() {
        out.iter_mut().for_each(|v| *v = Complex64::default());
    }

    for c in &op.components {
        let sign = parity_sign(c.parity);
        match strategy {
            MatvecStrategy::Dense => {
                let s = c.dense.as_ref().expect("checked").data();
                for u in &c.uses {
                    mac(&mut ws.outputs[u.row], s, &ws.inputs[u.col], sign * u.symmetry);
                }
            }
            MatvecStrategy::HosvdDecompress => {
                let buf = ws.buffer.as_mut().expect("checked");
                decompress_tucker(c.tucker.as_ref().expect("checked"), buf);
                for u in &c.uses {
                    mac(&mut ws.outputs[u.row], buf, &ws.inputs[u.col], sign * u.symmetry);
                }
            }
            MatvecStrategy::TuckerCpDecompress => {
                let buf = ws.buffer.as_mut().expect("checked");
                decompress_cp(c.tucker_cp.as_ref().expect("checked"), buf);
                for u in &c.uses {
                    mac(&mut ws.outputs[u.row], buf, &ws.inputs[u.col], sign * u.symmetry);
                }
            }
            MatvecStrategy::HosvdLoop => {
                for u in &c.uses {
                    tucker_loop(c.tucker.as_ref().expect("checked"), &mut ws.outputs[u.row], &ws.inputs[u.col], sign * u.symmetry);
                }
            }
            MatvecStrategy::TuckerCpLoop => {
                for u in &c.uses {
                    cp_loop(c.tucker_cp.as_ref().expect("checked"), &mut ws.outputs[u.row], &ws.inputs[u.col], sign * u.symmetry);
                }
            }
        }
    }

    let mut y = CurrentField::zeros(n);
    let inv = 1.0 / m as f64;
    for (q, buf) in ws.outputs.iter_mut().enumerate() {
        if !used_out[q] {
            continue;
        }
        op.dft.inverse_cropped(buf, n);
        let dst = y.component_mut(Axis::ALL[q]);
        for k in 0..n[2] {
            for j in 0..n[1] {
                let s = dims[0] * (j + dims[1] * k);
                let d = n[0] * (j + n[1] * k);
                for i in 0..n[0] {
                    dst[d + i] = buf[s + i] * inv;
                }
            }
        }
    }
    Ok(y)
}

const BLOCK: usize = 4096;

/// `acc += coef * s .* x`.
fn mac(acc: &mut [Complex64], s: &[Complex64], x: &[Complex64], coef: f64) {
    acc.par_chunks_mut(BLOCK)
        .zip(s.par_chunks(BLOCK))
        .zip(x.par_chunks(BLOCK))
        .for_each(|((a, s), x)| {
            for ((a, s), x) in a.iter_mut().zip(s).zip(x) {
                *a += s * x * coef;
            }
        });
}

/// Expands a Tucker form into `out` by successive mode products.
pub(crate) fn decompress_tucker(form: &TuckerForm, out: &mut [Complex64]) {
    let [r1, r2, r3] = form.core.dims();
    let n1 = form.factors[0].nrows();
    let n2 = form.factors[1].nrows();
    let n3 = form.factors[2].nrows();
    assert_eq!(out.len(), n1 * n2 * n3);
    // mode 1: (n1 x r1) (r1 x r2 r3)
    let core = DMatrixView::from_slice(form.core.data(), r1, r2 * r3);
    let t1 = &form.factors[0] * core; // n1 x (r2 r3), layout i + n1 (b + r2 c)
    // mode 2 per c: (n1 x r2) (r2 x n2)^T
    let u2t = form.factors[1].transpose();
    let mut t2 = DMatrix::<Complex64>::zeros(n1 * n2, r3);
    for c in 0..r3 {
        let slab = t1.columns(c * r2, r2);
        let prod = slab * &u2t; // n1 x n2
        t2.column_mut(c).copy_from_slice(prod.as_slice());
    }
    // mode 3: (n1 n2 x r3) (r3 x n3)
    let mut view = DMatrixViewMut::from_slice(out, n1 * n2, n3);
    view.gemm(Complex64::new(1.0, 0.0), &t2, &form.factors[2].transpose(), Complex64::default());
}

/// Expands a CP-type form into `out`.
pub(crate) fn decompress_cp(form: &TuckerCpForm, out: &mut [Complex64]) {
    let r = form.rank();
    let [w1, w2, w3] = &form.factors;
    let (n1, n2, n3) = (w1.nrows(), w2.nrows(), w3.nrows());
    assert_eq!(out.len(), n1 * n2 * n3);
    let mut kr = DMatrix::<Complex64>::zeros(n1 * n2, r);
    for l in 0..r {
        let mut col = kr.column_mut(l);
        for j in 0..n2 {
            let b = w2[(j, l)];
            for i in 0..n1 {
                col[i + n1 * j] = w1[(i, l)] * b;
            }
        }
    }
    let mut view = DMatrixViewMut::from_slice(out, n1 * n2, n3);
    view.gemm(Complex64::new(1.0, 0.0), &kr, &w3.transpose(), Complex64::default());
}

/// Fused Tucker evaluation and product, `O(r1 r2 r3)` work per entry.
fn tucker_loop(form: &TuckerForm, acc: &mut [Complex64], x: &[Complex64], coef: f64) {
    let [r1, r2, r3] = form.core.dims();
    let [u1, u2, u3] = &form.factors;
    let (n1, n2) = (u1.nrows(), u2.nrows());
    let g = form.core.data();
    acc.par_chunks_mut(n1 * n2)
        .zip(x.par_chunks(n1 * n2))
        .enumerate()
        .for_each(|(k, (plane, xs))| {
            for j in 0..n2 {
                for i in 0..n1 {
                    let mut s = Complex64::default();
                    for c in 0..r3 {
                        let mut sb = Complex64::default();
                        for b in 0..r2 {
                            let mut sa = Complex64::default();
                            let base = r1 * (b + r2 * c);
                            for a in 0..r1 {
                                sa += g[base + a] * u1[(i, a)];
                            }
                            sb += sa * u2[(j, b)];
                        }
                        s += sb * u3[(k, c)];
                    }
                    let idx = i + n1 * j;
                    plane[idx] += s * xs[idx] * coef;
                }
            }
        });
}

/// Fused CP evaluation and product, `O(r)` work per entry.
fn cp_loop(form: &TuckerCpForm, acc: &mut [Complex64], x: &[Complex64], coef: f64) {
    let r = form.rank();
    let [w1, w2, w3] = &form.factors;
    let (n1, n2) = (w1.nrows(), w2.nrows());
    // rows of W1 contiguous per entry
    let w1t: Vec<Complex64> = (0..n1).flat_map(|i| (0..r).map(move |l| w1[(i, l)])).collect();
    acc.par_chunks_mut(n1 * n2)
        .zip(x.par_chunks(n1 * n2))
        .enumerate()
        .for_each_init(
            || vec![Complex64::default(); r],
            |p, (k, (plane, xs))| {
                for j in 0..n2 {
                    for l in 0..r {
                        p[l] = w2[(j, l)] * w3[(k, l)] * coef;
                    }
                    let row = &mut plane[n1 * j..n1 * (j + 1)];
                    let xr = &xs[n1 * j..n1 * (j + 1)];
                    for i in 0..n1 {
                        let w = &w1t[i * r..(i + 1) * r];
                        let mut s = Complex64::default();
                        for l in 0..r {
                            s += w[l] * p[l];
                        }
                        row[i] += s * xr[i];
                    }
                }
            },
        );
}

/// Entry `T(d)` for any signed offset, using the parity of the component.
pub fn toeplitz_entry(t: &Tensor3, parity: Parity, offset: [i64; 3]) -> Complex64 {
    let mut sign = 1.0;
    let mut idx = [0usize; 3];
    for a in 0..3 {
        idx[a] = offset[a].unsigned_abs() as usize;
        if offset[a] < 0 && parity[a] {
            sign = -sign;
        }
    }
    t.get(idx[0], idx[1], idx[2]) * sign
}

/// Explicit `3N x 3N` block-Toeplitz matrix, rows/columns ordered like
/// [`CurrentField`] data.
pub fn dense_matrix(grid_dims: [usize; 3], comps: &[(KernelComponent, Tensor3)], expand: bool) -> Result<DMatrix<Complex64>> {
    let nv: usize = grid_dims.iter().product();
    let mut a = DMatrix::<Complex64>::zeros(3 * nv, 3 * nv);
    let coords: Vec<[i64; 3]> = (0..nv)
        .map(|idx| {
            [
                (idx % grid_dims[0]) as i64,
                ((idx / grid_dims[0]) % grid_dims[1]) as i64,
                (idx / (grid_dims[0] * grid_dims[1])) as i64,
            ]
        })
        .collect();
    for (comp, t) in comps {
        if t.dims() != grid_dims {
            return Err(Error::DimensionMismatch(format!("component {comp} does not match the grid")));
        }
        let parity = comp.parity();
        for u in usages(*comp, expand) {
            for (n, cn) in coords.iter().enumerate() {
                for (m, cm) in coords.iter().enumerate() {
                    let d = [cm[0] - cn[0], cm[1] - cn[1], cm[2] - cn[2]];
                    a[(u.row * nv + n, u.col * nv + m)] += toeplitz_entry(t, parity, d) * u.symmetry;
                }
            }
        }
    }
    Ok(a)
}

/// Defining tensors of the adjoint operator, one per block `(q, q')`:
/// `p^{q'q} conj(T^{q'q})`, returned unexpanded.
pub fn adjoint_components(comps: &[(KernelComponent, Tensor3)], expand: bool) -> Vec<(KernelComponent, Tensor3)> {
    let mut blocks: Vec<(KernelComponent, Tensor3)> = Vec::new();
    for (comp, t) in comps {
        for u in usages(*comp, expand) {
            let row = Axis::ALL[u.row];
            let col = Axis::ALL[u.col];
            // block (row, col) of A is symmetry * T; it lands at (col, row) of A^H
            let src = KernelComponent::new(comp.operator, row, col);
            let sign = parity_sign(src.parity()) * u.symmetry;
            let adj = KernelComponent::new(comp.operator, col, row);
            blocks.push((adj, t.conj().scaled(Complex64::new(sign, 0.0))));
        }
    }
    blocks
}
