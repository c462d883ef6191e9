//! Galerkin assembly of the Toeplitz-defining tensors of the volume integral
//! operators on a uniform voxel grid with pulse (PWC) basis functions.
//!
//! Entry `T[i, j, k]` couples the test voxel at the grid origin with the source
//! voxel at offset `d = (i, j, k)` (offset = source - test), normalised by the
//! voxel volume `V`:
//!
//! ```text
//! N^{qq'}[d] = (k0^2 d_qq' I_g + I_qq' + d_qq' [d = 0] V) / V
//! K^{qq'}[d] = sum_j e_{q j q'} I_j / V
//! G[d]       = I_g / V
//! ```
//!
//! with `I_g = int_n int_m g(r - r')`, `I_j` the same for `d_j g` and
//! `I_qq'` for `d_q d_q' g`. Working in `R = r - r'` the double volume integral
//! becomes a single integral with tent weights `(D_k - |R_k + d_k|)_+`.
//!
//! Far entries integrate the closed-form dyadic kernels directly. Entries
//! within `near_radius` (Chebyshev distance) use the surface form of the
//! `d_q d_q'` term, `-sum_{s,s'} s s' int_{face q,s} int_{face q',s'} g`, and a
//! singular quadrature for the remaining weakly singular integrals.
//!
//! Everything is computed in units of the x voxel edge `L`; N is scale-free,
//! K carries a factor `L` and G a factor `L^2`.

mod basis;
mod kernel;
pub(crate) mod quadrature;

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;
use kernel::{jet, norm3, scalar, scalar_smooth, scalar_static, smooth_radial_derivative};
use quadrature::{integrate, GaussRule, Part, Singular, Span};

pub use basis::{basis_eval, BasisOrder};
pub use kernel::green_g;

/// Uniform voxel grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub dims: [usize; 3],
    /// Voxel edge lengths in meters.
    pub resolution: [f64; 3],
    /// Center of voxel `(0, 0, 0)` in meters.
    pub origin: [f64; 3],
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], resolution: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let g = Self { dims, resolution, origin };
        g.validate()?;
        Ok(g)
    }

    /// Cubic voxels of edge `h`, origin at zero.
    pub fn cubic(dims: [usize; 3], h: f64) -> Result<Self> {
        Self::new(dims, [h; 3], [0.0; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::DegenerateDims(self.dims));
        }
        if self.resolution.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "voxel resolution must be positive, got {:?}",
                self.resolution
            )));
        }
        if self.origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("grid origin must be finite".into()));
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn voxel_volume(&self) -> f64 {
        self.resolution.iter().product()
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.resolution[0],
            self.origin[1] + j as f64 * self.resolution[1],
            self.origin[2] + k as f64 * self.resolution[2],
        ]
    }

    /// Length used to nondimensionalise the assembly (the x edge).
    pub fn length_unit(&self) -> f64 {
        self.resolution[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("axis index {i} out of range")))
    }

    fn letter(self) -> char {
        ['x', 'y', 'z'][self.index()]
    }
}

/// Integral operator whose Galerkin tensor is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    /// `curl curl int g`, symmetric dyad.
    N,
    /// `curl int g`, antisymmetric dyad.
    K,
    /// Scalar single layer `int g`.
    ScalarG,
}

/// One dyad component `(row, col)` of an operator. `ScalarG` ignores the
/// directions and is conventionally stored as `(x, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelComponent {
    pub operator: OperatorKind,
    pub row: Axis,
    pub col: Axis,
}

impl KernelComponent {
    pub fn new(operator: OperatorKind, row: Axis, col: Axis) -> Self {
        Self { operator, row, col }
    }

    pub fn n(row: Axis, col: Axis) -> Self {
        Self::new(OperatorKind::N, row, col)
    }

    pub fn k(row: Axis, col: Axis) -> Self {
        Self::new(OperatorKind::K, row, col)
    }

    pub fn scalar() -> Self {
        Self::new(OperatorKind::ScalarG, Axis::X, Axis::X)
    }

    /// Short name such as `Nxy`, `Kyz` or `G`.
    pub fn label(&self) -> String {
        match self.operator {
            OperatorKind::ScalarG => "G".to_string(),
            OperatorKind::N => format!("N{}{}", self.row.letter(), self.col.letter()),
            OperatorKind::K => format!("K{}{}", self.row.letter(), self.col.letter()),
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        self.operator == OperatorKind::K && self.row == self.col
    }

    /// Per-axis parity of the entries under `d_k -> -d_k` (true = odd).
    pub fn parity(&self) -> [bool; 3] {
        let (q, p) = (self.row.index(), self.col.index());
        match self.operator {
            OperatorKind::ScalarG => [false; 3],
            OperatorKind::N => {
                let mut odd = [false; 3];
                if q != p {
                    odd[q] = true;
                    odd[p] = true;
                }
                odd
            }
            OperatorKind::K => {
                let mut odd = [false; 3];
                if q != p {
                    odd[3 - q - p] = true;
                }
                odd
            }
        }
    }

    /// Physical factor multiplying the nondimensional entries.
    pub fn scale_factor(&self, length_unit: f64) -> f64 {
        match self.operator {
            OperatorKind::N => 1.0,
            OperatorKind::K => length_unit,
            OperatorKind::ScalarG => length_unit * length_unit,
        }
    }
}

impl fmt::Display for KernelComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Minimal set of components that have to be stored.
pub fn unique_components(operator: OperatorKind, order: BasisOrder) -> Result<Vec<KernelComponent>> {
    if order == BasisOrder::Pwl {
        return Err(Error::Unsupported(
            "PWL tensors (60 unique N and 30 unique K entries per voxel) are not assembled; use PWC".into(),
        ));
    }
    use Axis::*;
    Ok(match operator {
        OperatorKind::ScalarG => vec![KernelComponent::scalar()],
        OperatorKind::N => [(X, X), (Y, Y), (Z, Z), (X, Y), (X, Z), (Y, Z)]
            .iter()
            .map(|&(a, b)| KernelComponent::n(a, b))
            .collect(),
        OperatorKind::K => [(X, Y), (X, Z), (Y, Z)]
            .iter()
            .map(|&(a, b)| KernelComponent::k(a, b))
            .collect(),
    })
}

/// Treatment of the weakly singular near-field integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfStrategy {
    /// `g = (g - g_static) + g_static`: static part through a Duffy map,
    /// bounded remainder by tensor Gauss.
    #[default]
    SingularitySubtraction,
    /// Duffy map applied to the whole kernel.
    DuffyFullKernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    /// Gauss points per axis and sub-box for far entries.
    pub far_points_per_axis: usize,
    /// Gauss points per axis and sub-box for near entries.
    pub near_points_per_axis: usize,
    /// Chebyshev voxel distance up to which the near rule applies.
    pub near_radius: usize,
    pub self_strategy: SelfStrategy,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            far_points_per_axis: 5,
            near_points_per_axis: 10,
            near_radius: 1,
            self_strategy: SelfStrategy::SingularitySubtraction,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.far_points_per_axis == 0 || self.near_points_per_axis == 0 {
            return Err(Error::InvalidArgument("quadrature budget of zero points".into()));
        }
        if self.near_radius == 0 {
            return Err(Error::InvalidArgument("near_radius must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    g: Complex64,
    grad: [Complex64; 3],
    hess: [[Complex64; 3]; 3],
}

#[derive(Debug, Clone, Copy)]
enum Need {
    Value,
    Gradient,
    Hessian,
}

/// Evaluates Galerkin entries for arbitrary (also negative) voxel offsets.
#[derive(Debug, Clone)]
pub struct Assembler {
    grid: VoxelGrid,
    quad: QuadratureSpec,
    k0: f64,
    unit: f64,
    /// Voxel edges in units of `unit`.
    edge: [f64; 3],
    volume: f64,
    wavenumber: f64,
    far_rule: GaussRule,
    near_rule: GaussRule,
    singular: Singular,
}

impl Assembler {
    pub fn new(grid: &VoxelGrid, k0: f64, quad: &QuadratureSpec) -> Result<Self> {
        grid.validate()?;
        quad.validate()?;
        if !(k0.is_finite() && k0 >= 0.0) {
            return Err(Error::InvalidArgument(format!("wavenumber must be finite and >= 0, got {k0}")));
        }
        let unit = grid.length_unit();
        let edge = grid.resolution.map(|h| h / unit);
        Ok(Self {
            grid: *grid,
            quad: *quad,
            k0,
            unit,
            edge,
            volume: edge.iter().product(),
            wavenumber: k0 * unit,
            far_rule: GaussRule::new(quad.far_points_per_axis),
            near_rule: GaussRule::new(quad.near_points_per_axis),
            singular: match quad.self_strategy {
                SelfStrategy::SingularitySubtraction => Singular::Subtract,
                SelfStrategy::DuffyFullKernel => Singular::DuffyFull,
            },
        })
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quad
    }

    fn is_near(&self, offset: [i64; 3]) -> bool {
        offset.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) <= self.quad.near_radius as u64
    }

    fn displacement(&self, offset: [i64; 3]) -> [f64; 3] {
        [
            offset[0] as f64 * self.edge[0],
            offset[1] as f64 * self.edge[1],
            offset[2] as f64 * self.edge[2],
        ]
    }

    /// Tent-weighted volume integral of the kernel and its derivatives.
    fn volume_moments(&self, shift: [f64; 3], near: bool, need: Need) -> Moments {
        let h = self.edge;
        let spans = [0, 1, 2].map(|k| Span::Tent { center: -shift[k], half: h[k] });
        let rule = if near { &self.near_rule } else { &self.far_rule };
        let kt = self.wavenumber;
        let mut m = Moments::default();
        integrate(&spans, rule, self.singular, &mut |x, w, part| {
            let dist = norm3(x);
            match (part, need) {
                (Part::Full, Need::Hessian) => {
                    let j = jet(x, kt, false);
                    m.g += j.g * w;
                    for a in 0..3 {
                        m.grad[a] += j.grad[a] * w;
                        for b in 0..3 {
                            m.hess[a][b] += j.hess[a][b] * w;
                        }
                    }
                }
                (Part::Full, _) => {
                    let g = scalar(dist, kt);
                    m.g += g * w;
                    if let Need::Gradient = need {
                        let g1 = -Complex64::new(1.0 / dist, kt) * g / dist;
                        for a in 0..3 {
                            m.grad[a] += g1 * (x[a] * w);
                        }
                    }
                }
                (Part::Static, _) => {
                    let g = scalar_static(dist);
                    m.g += g * w;
                    let g1 = -g / (dist * dist);
                    for a in 0..3 {
                        m.grad[a] += g1 * x[a] * w;
                    }
                }
                (Part::Smooth, _) => {
                    m.g += scalar_smooth(dist, kt) * w;
                    if dist > 0.0 {
                        let g1 = smooth_radial_derivative(dist, kt) / dist;
                        for a in 0..3 {
                            m.grad[a] += g1 * (x[a] * w);
                        }
                    }
                }
            }
        });
        m
    }

    /// `int_n int_m d_q d_q' g` through the face-pair form.
    fn surface_second_derivative(&self, shift: [f64; 3], q: usize, p: usize, rule: &GaussRule) -> Complex64 {
        let h = self.edge;
        let kt = self.wavenumber;
        let mut total = Complex64::default();
        for s in [1.0, -1.0] {
            for sp in [1.0, -1.0] {
                let mut spans = [0, 1, 2].map(|k| Span::Tent { center: -shift[k], half: h[k] });
                if q == p {
                    spans[q] = Span::Fixed(0.5 * s * h[q] - shift[q] - 0.5 * sp * h[q]);
                } else {
                    let cq = 0.5 * s * h[q] - shift[q];
                    spans[q] = Span::Uniform(cq - 0.5 * h[q], cq + 0.5 * h[q]);
                    let cp = -shift[p] - 0.5 * sp * h[p];
                    spans[p] = Span::Uniform(cp - 0.5 * h[p], cp + 0.5 * h[p]);
                }
                let mut acc = Complex64::default();
                integrate(&spans, rule, self.singular, &mut |x, w, part| {
                    let dist = norm3(x);
                    acc += w * match part {
                        Part::Full => scalar(dist, kt),
                        Part::Static => Complex64::new(scalar_static(dist), 0.0),
                        Part::Smooth => scalar_smooth(dist, kt),
                    };
                });
                total -= acc * (s * sp);
            }
        }
        total
    }

    /// Nondimensional entries of several components of one operator.
    fn raw_entries(&self, operator: OperatorKind, comps: &[(usize, usize)], offset: [i64; 3], out: &mut [Complex64]) {
        let shift = self.displacement(offset);
        let near = self.is_near(offset);
        let inv_v = 1.0 / self.volume;
        let kt2 = self.wavenumber * self.wavenumber;
        match operator {
            OperatorKind::ScalarG => {
                let m = self.volume_moments(shift, near, Need::Value);
                out[0] = m.g * inv_v;
            }
            OperatorKind::K => {
                let m = self.volume_moments(shift, near, Need::Gradient);
                for (slot, &(q, p)) in out.iter_mut().zip(comps) {
                    *slot = if q == p {
                        Complex64::default()
                    } else {
                        let j = 3 - q - p;
                        levi_civita(q, j, p) * m.grad[j] * inv_v
                    };
                }
            }
            OperatorKind::N => {
                let diagonal = comps.iter().any(|&(q, p)| q == p);
                if near {
                    let g = if diagonal && kt2 != 0.0 {
                        self.volume_moments(shift, true, Need::Value).g
                    } else {
                        Complex64::default()
                    };
                    for (slot, &(q, p)) in out.iter_mut().zip(comps) {
                        let mut v = self.surface_second_derivative(shift, q, p, &self.near_rule);
                        if q == p {
                            v += g * kt2;
                            if offset == [0, 0, 0] {
                                v += self.volume;
                            }
                        }
                        *slot = v * inv_v;
                    }
                } else {
                    let m = self.volume_moments(shift, false, Need::Hessian);
                    for (slot, &(q, p)) in out.iter_mut().zip(comps) {
                        let mut v = m.hess[q][p];
                        if q == p {
                            v += m.g * kt2;
                        }
                        *slot = v * inv_v;
                    }
                }
            }
        }
    }

    /// Entry of `comp` for the source voxel at `offset` from the test voxel,
    /// in physical units.
    pub fn entry(&self, comp: KernelComponent, offset: [i64; 3]) -> Complex64 {
        let mut out = [Complex64::default()];
        self.raw_entries(comp.operator, &[(comp.row.index(), comp.col.index())], offset, &mut out);
        out[0] * comp.scale_factor(self.unit)
    }

    /// Defining tensors (non-negative offsets) of several components of one
    /// operator, sharing kernel evaluations.
    pub fn tensors(&self, comps: &[KernelComponent]) -> Result<Vec<Tensor3>> {
        let Some(first) = comps.first() else {
            return Ok(Vec::new());
        };
        let operator = first.operator;
        if comps.iter().any(|c| c.operator != operator) {
            return Err(Error::InvalidArgument("components of one batch must share the operator".into()));
        }
        let pairs: Vec<(usize, usize)> = comps.iter().map(|c| (c.row.index(), c.col.index())).collect();
        let active: Vec<usize> = (0..comps.len()).filter(|&c| !comps[c].is_identically_zero()).collect();
        let active_pairs: Vec<(usize, usize)> = active.iter().map(|&c| pairs[c]).collect();
        let dims = self.grid.dims;
        let count = dims.iter().product::<usize>();
        let nc = active.len();
        let mut flat = vec![Complex64::default(); count * nc];
        if nc > 0 {
            flat.par_chunks_mut(nc).enumerate().for_each(|(idx, slot)| {
                let i = idx % dims[0];
                let j = (idx / dims[0]) % dims[1];
                let k = idx / (dims[0] * dims[1]);
                self.raw_entries(operator, &active_pairs, [i as i64, j as i64, k as i64], slot);
            });
        }
        let mut out: Vec<Tensor3> = comps.iter().map(|_| Tensor3::zeros(dims)).collect();
        for (slot, &c) in active.iter().enumerate() {
            let scale = comps[c].scale_factor(self.unit);
            let data = out[c].data_mut();
            for idx in 0..count {
                data[idx] = flat[idx * nc + slot] * scale;
            }
        }
        Ok(out)
    }

    pub fn tensor(&self, comp: KernelComponent) -> Result<Tensor3> {
        Ok(self.tensors(&[comp])?.remove(0))
    }

    /// `int_n int_m d_q d_q' g` for two voxels `offset` apart, by both the
    /// face-pair form and the direct volume form of the dyadic kernel, in
    /// nondimensional units. Only meaningful for separated voxels.
    pub fn second_derivative_forms(&self, offset: [i64; 3], row: Axis, col: Axis) -> (Complex64, Complex64) {
        let shift = self.displacement(offset);
        let surface = self.surface_second_derivative(shift, row.index(), col.index(), &self.near_rule);
        let volume = self.volume_moments(shift, false, Need::Hessian).hess[row.index()][col.index()];
        (surface, volume)
    }
}

fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Defining tensor of one component.
pub fn assemble_defining_tensor(grid: &VoxelGrid, k0: f64, comp: KernelComponent, quad: &QuadratureSpec) -> Result<Tensor3> {
    Assembler::new(grid, k0, quad)?.tensor(comp)
}

/// All unique PWC components of `operator`, assembled in one pass.
pub fn assemble_operator(
    grid: &VoxelGrid,
    k0: f64,
    operator: OperatorKind,
    quad: &QuadratureSpec,
) -> Result<Vec<(KernelComponent, Tensor3)>> {
    let comps = unique_components(operator, BasisOrder::Pwc)?;
    let tensors = Assembler::new(grid, k0, quad)?.tensors(&comps)?;
    Ok(comps.into_iter().zip(tensors).collect())
}

/// Static self-interaction of a voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticSelfTerm {
    /// `-(1/V) int_n int_n grad grad (1/(4 pi R))`; `I/3` for a cube.
    pub depolarization: [[f64; 3]; 3],
    /// Static N self entry, `I - depolarization`.
    pub dyad: [[Complex64; 3]; 3],
    /// Largest change against a rule with twice the points.
    pub indicator: f64,
}

/// Tolerance on [`StaticSelfTerm::indicator`].
pub const SELF_TERM_TOLERANCE: f64 = 1e-7;

/// Static self term of a voxel with edges `delta`.
pub fn self_static_term(delta: [f64; 3], quad: &QuadratureSpec) -> Result<StaticSelfTerm> {
    let grid = VoxelGrid::new([1, 1, 1], delta, [0.0; 3])?;
    let coarse = Assembler::new(&grid, 0.0, quad)?;
    let mut fine_quad = *quad;
    fine_quad.near_points_per_axis *= 2;
    let fine = Assembler::new(&grid, 0.0, &fine_quad)?;
    let mut depolarization = [[0.0; 3]; 3];
    let mut dyad = [[Complex64::default(); 3]; 3];
    let mut indicator: f64 = 0.0;
    let mut largest: f64 = 0.0;
    for q in 0..3 {
        for p in 0..3 {
            let a = coarse.surface_second_derivative([0.0; 3], q, p, &coarse.near_rule).re / coarse.volume;
            let b = fine.surface_second_derivative([0.0; 3], q, p, &fine.near_rule).re / fine.volume;
            indicator = indicator.max((a - b).abs());
            largest = largest.max(a.abs());
            depolarization[q][p] = -a;
            dyad[q][p] = Complex64::new(if q == p { 1.0 + a } else { a }, 0.0);
        }
    }
    if indicator > SELF_TERM_TOLERANCE {
        return Err(Error::QuadratureNotConverged {
            estimate: largest,
            indicator,
        });
    }
    Ok(StaticSelfTerm {
        depolarization,
        dyad,
        indicator,
    })
}

/// Text manifest stored next to an assembled tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyManifest {
    pub grid: VoxelGrid,
    pub k0: f64,
    pub component: KernelComponent,
    pub label: String,
    pub basis: BasisOrder,
    pub quadrature: QuadratureSpec,
    /// Offset convention of the tensor index.
    pub offset_convention: String,
    /// Length used to nondimensionalise the integrals (meters).
    pub length_unit: f64,
    /// Factor applied to the nondimensional entries.
    pub scale_factor: f64,
    pub parity_odd: [bool; 3],
}

impl AssemblyManifest {
    pub fn new(grid: &VoxelGrid, k0: f64, component: KernelComponent, quadrature: &QuadratureSpec) -> Self {
        let length_unit = grid.length_unit();
        Self {
            grid: *grid,
            k0,
            component,
            label: component.label(),
            basis: BasisOrder::Pwc,
            quadrature: *quadrature,
            offset_convention: "T[i,j,k] couples test voxel (0,0,0) with source voxel (i,j,k)".into(),
            length_unit,
            scale_factor: component.scale_factor(length_unit),
            parity_odd: component.parity(),
        }
    }
}
