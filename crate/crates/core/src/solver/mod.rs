//! Electric-current volume integral equation on a voxel grid: system
//! operator, right-hand side, field recovery and absorbed-power outputs.
//!
//! Time dependence is `exp(+i w t)`, so the Green's function is
//! `exp(-i k0 R) / (4 pi R)` and lossy media have `Im(eps_r) < 0`.
//! The unknown is the polarization current `j = c_e chi_e e` with
//! `c_e = i w eps0`, and the discrete system reads
//!
//! ```text
//! (M_eps - M_chi N) j = c_e M_chi e_inc
//! ```

mod gmres;
mod scene;

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_operator, Axis, KernelComponent, OperatorKind, QuadratureSpec, VoxelGrid};
use crate::decomp::{CompressionStats, TruncationRule, TuckerCpConfig};
use crate::error::{Error, Result};
use crate::fft_operator::{
    apply_operator_with, CurrentField, EmbeddedSpectrum, MatvecStrategy, ScratchPolicy, SpectrumForms, Workspace,
};
use crate::tensor::Tensor3;

pub use gmres::{gmres, GmresConfig, GmresOutcome};
pub use scene::{load_scene, save_scene, write_report, SceneManifest, SCENE_VERSION};

/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_812_8e-12;
/// Vacuum permeability (H/m).
pub const MU0: f64 = 1.256_637_062_12e-6;

pub fn speed_of_light() -> f64 {
    1.0 / (EPS0 * MU0).sqrt()
}

/// Wave impedance of free space (ohm).
pub fn free_space_impedance() -> f64 {
    (MU0 / EPS0).sqrt()
}

pub fn wavenumber(frequency: f64) -> f64 {
    2.0 * std::f64::consts::PI * frequency / speed_of_light()
}

/// Complex relative permittivity for conductivity `sigma` (S/m).
pub fn lossy_permittivity(eps_real: f64, sigma: f64, frequency: f64) -> Complex64 {
    let omega = 2.0 * std::f64::consts::PI * frequency;
    Complex64::new(eps_real, -sigma / (EPS0 * omega))
}

/// Per-voxel complex relative permittivity at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct DielectricMap {
    dims: [usize; 3],
    eps_r: Vec<Complex64>,
    frequency: f64,
}

impl DielectricMap {
    /// `eps_r` is indexed like [`Tensor3`](crate::Tensor3) data. Gain media
    /// (`Im(eps_r) > 0`) are rejected.
    pub fn new(dims: [usize; 3], eps_r: Vec<Complex64>, frequency: f64) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n == 0 {
            return Err(Error::DegenerateDims(dims));
        }
        if eps_r.len() != n {
            return Err(Error::DimensionMismatch(format!("permittivity map of {dims:?} needs {n} values, got {}", eps_r.len())));
        }
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(Error::InvalidArgument(format!("frequency must be positive, got {frequency}")));
        }
        if let Some(bad) = eps_r.iter().find(|z| !z.re.is_finite() || !z.im.is_finite() || z.im > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "relative permittivity {bad} is not a passive medium (imaginary part must be <= 0)"
            )));
        }
        Ok(Self { dims, eps_r, frequency })
    }

    /// Background everywhere.
    pub fn vacuum(dims: [usize; 3], frequency: f64) -> Result<Self> {
        Self::new(dims, vec![Complex64::new(1.0, 0.0); dims.iter().product()], frequency)
    }

    /// From real permittivity and conductivity (S/m) volumes.
    pub fn from_conductivity(dims: [usize; 3], eps_real: &[f64], sigma: &[f64], frequency: f64) -> Result<Self> {
        if eps_real.len() != sigma.len() {
            return Err(Error::DimensionMismatch("permittivity and conductivity volumes differ in size".into()));
        }
        let eps = eps_real
            .iter()
            .zip(sigma)
            .map(|(&e, &s)| lossy_permittivity(e, s, frequency))
            .collect();
        Self::new(dims, eps, frequency)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxels(&self) -> usize {
        self.eps_r.len()
    }

    pub fn eps_r(&self) -> &[Complex64] {
        &self.eps_r
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency
    }

    pub fn k0(&self) -> f64 {
        wavenumber(self.frequency)
    }

    /// `c_e = i w eps0`.
    pub fn ce(&self) -> Complex64 {
        Complex64::new(0.0, self.omega() * EPS0)
    }

    /// `c_m = i w mu0`.
    pub fn cm(&self) -> Complex64 {
        Complex64::new(0.0, self.omega() * MU0)
    }

    /// Electric contrast `eps_r - 1` of voxel `v`.
    pub fn chi(&self, v: usize) -> Complex64 {
        self.eps_r[v] - 1.0
    }

    /// Conductivity of voxel `v` in S/m.
    pub fn sigma(&self, v: usize) -> f64 {
        -self.eps_r[v].im * EPS0 * self.omega()
    }

    pub fn is_background(&self, v: usize) -> bool {
        self.chi(v) == Complex64::default()
    }
}

/// Linearly polarized plane wave `E0 p exp(-i k0 d . r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneWave {
    pub polarization: [f64; 3],
    pub direction: [f64; 3],
    /// Field amplitude in V/m.
    pub amplitude: f64,
}

impl Default for PlaneWave {
    /// `x` polarized, travelling along `+z`, 1 V/m.
    fn default() -> Self {
        Self {
            polarization: [1.0, 0.0, 0.0],
            direction: [0.0, 0.0, 1.0],
            amplitude: 1.0,
        }
    }
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

impl PlaneWave {
    pub fn new(polarization: [f64; 3], direction: [f64; 3], amplitude: f64) -> Result<Self> {
        let w = Self {
            polarization,
            direction,
            amplitude,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: [f64; 3]| (dot3(v, v).sqrt() - 1.0).abs() < 1e-9;
        if !unit(self.polarization) || !unit(self.direction) {
            return Err(Error::InvalidArgument("plane-wave polarization and direction must be unit vectors".into()));
        }
        if dot3(self.polarization, self.direction).abs() > 1e-9 {
            return Err(Error::InvalidArgument("plane-wave polarization must be orthogonal to its direction".into()));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidArgument("plane-wave amplitude must be finite".into()));
        }
        Ok(())
    }

    fn phase(&self, k0: f64, r: [f64; 3]) -> Complex64 {
        Complex64::from_polar(self.amplitude, -k0 * dot3(self.direction, r))
    }

    /// Electric field at `r`.
    pub fn e_at(&self, k0: f64, r: [f64; 3]) -> [Complex64; 3] {
        let p = self.phase(k0, r);
        self.polarization.map(|c| p * c)
    }

    /// Magnetic field at `r`, `(1/eta0) d x e`.
    pub fn h_at(&self, k0: f64, r: [f64; 3]) -> [Complex64; 3] {
        let p = self.phase(k0, r) / free_space_impedance();
        cross3(self.direction, self.polarization).map(|c| p * c)
    }
}

fn check_dims(grid: &VoxelGrid, map: &DielectricMap) -> Result<()> {
    if grid.dims != map.dims() {
        return Err(Error::DimensionMismatch(format!(
            "grid {:?} vs permittivity map {:?}",
            grid.dims,
            map.dims()
        )));
    }
    Ok(())
}

fn sample(grid: &VoxelGrid, mut f: impl FnMut(usize, [f64; 3]) -> [Complex64; 3]) -> CurrentField {
    let mut out = CurrentField::zeros(grid.dims);
    let n = grid.voxel_count();
    let [n1, n2, n3] = grid.dims;
    let data = out.data_mut();
    for k in 0..n3 {
        for j in 0..n2 {
            for i in 0..n1 {
                let v = i + n1 * (j + n2 * k);
                let val = f(v, grid.center(i, j, k));
                for q in 0..3 {
                    data[q * n + v] = val[q];
                }
            }
        }
    }
    out
}

/// Incident electric field sampled at voxel centers.
pub fn incident_e(grid: &VoxelGrid, k0: f64, inc: &PlaneWave) -> CurrentField {
    sample(grid, |_, r| inc.e_at(k0, r))
}

/// Incident magnetic field sampled at voxel centers.
pub fn incident_h(grid: &VoxelGrid, k0: f64, inc: &PlaneWave) -> CurrentField {
    sample(grid, |_, r| inc.h_at(k0, r))
}

/// `c_e chi_e e_inc`, with `e_inc` sampled at voxel centers.
pub fn build_rhs(map: &DielectricMap, inc: &PlaneWave, grid: &VoxelGrid) -> Result<CurrentField> {
    check_dims(grid, map)?;
    inc.validate()?;
    let ce = map.ce();
    let k0 = map.k0();
    Ok(sample(grid, |v, r| {
        let s = ce * map.chi(v);
        if s == Complex64::default() {
            [Complex64::default(); 3]
        } else {
            inc.e_at(k0, r).map(|e| e * s)
        }
    }))
}

/// How the Green's-function spectra are stored and applied.
#[derive(Debug, Clone)]
pub struct OperatorSettings {
    pub strategy: MatvecStrategy,
    /// Compression tolerance (ignored by `Dense`).
    pub tol: f64,
    pub rule: TruncationRule,
    pub cp: TuckerCpConfig,
    pub quadrature: QuadratureSpec,
}

impl Default for OperatorSettings {
    fn default() -> Self {
        Self {
            strategy: MatvecStrategy::Dense,
            tol: 1e-8,
            rule: TruncationRule::Energy,
            cp: TuckerCpConfig::new(1e-8, 1000),
            quadrature: QuadratureSpec::default(),
        }
    }
}

impl OperatorSettings {
    pub fn forms(&self) -> SpectrumForms {
        SpectrumForms::for_strategy(self.strategy, self.tol, self.rule, &self.cp)
    }
}

/// Assembled and transformed `N` (and optionally `K`) operators on a grid.
#[derive(Debug, Clone)]
pub struct GridOperators {
    pub n: EmbeddedSpectrum,
    pub k: Option<EmbeddedSpectrum>,
    pub strategy: MatvecStrategy,
    pub assembly_seconds: f64,
    pub compression_seconds: f64,
}

impl GridOperators {
    /// Assembles `N` (and `K` when `with_k`) at `k0` and builds the
    /// spectra required by `settings.strategy`.
    pub fn build(grid: &VoxelGrid, k0: f64, settings: &OperatorSettings, with_k: bool) -> Result<Self> {
        let t = Instant::now();
        let n_tensors = assemble_operator(grid, k0, OperatorKind::N, &settings.quadrature)?;
        let k_tensors = if with_k {
            Some(assemble_operator(grid, k0, OperatorKind::K, &settings.quadrature)?)
        } else {
            None
        };
        let mut ops = Self::from_tensors(grid.dims, &n_tensors, k_tensors.as_deref(), settings)?;
        ops.assembly_seconds = t.elapsed().as_secs_f64() - ops.compression_seconds;
        Ok(ops)
    }

    /// Builds the spectra from already assembled defining tensors, so that
    /// several strategies can share one assembly.
    pub fn from_tensors(
        grid_dims: [usize; 3],
        n_tensors: &[(KernelComponent, Tensor3)],
        k_tensors: Option<&[(KernelComponent, Tensor3)]>,
        settings: &OperatorSettings,
    ) -> Result<Self> {
        let t = Instant::now();
        let forms = settings.forms();
        let n = EmbeddedSpectrum::new(grid_dims, n_tensors, &forms, true)?;
        let k = match k_tensors {
            Some(kt) => Some(EmbeddedSpectrum::new(grid_dims, kt, &forms, true)?),
            None => None,
        };
        Ok(Self {
            n,
            k,
            strategy: settings.strategy,
            assembly_seconds: 0.0,
            compression_seconds: t.elapsed().as_secs_f64(),
        })
    }

    /// Summed storage statistics of the compressed `N` components.
    pub fn n_compression(&self) -> Option<CompressionStats> {
        let parts: Option<Vec<CompressionStats>> = self
            .n
            .components()
            .iter()
            .map(|c| match self.strategy {
                MatvecStrategy::HosvdDecompress | MatvecStrategy::HosvdLoop => c.tucker_stats,
                MatvecStrategy::TuckerCpDecompress | MatvecStrategy::TuckerCpLoop => c.tucker_cp_stats,
                MatvecStrategy::Dense => None,
            })
            .collect();
        CompressionStats::combine(&parts?)
    }
}

/// `y = M_eps x - M_chi (N x)`.
pub fn apply_system(map: &DielectricMap, n_op: &EmbeddedSpectrum, x: &CurrentField, strategy: MatvecStrategy) -> Result<CurrentField> {
    let mut ws = Workspace::new(n_op, ScratchPolicy::minimal_for(strategy));
    apply_system_with(map, n_op, x, strategy, &mut ws)
}

fn apply_system_with(
    map: &DielectricMap,
    n_op: &EmbeddedSpectrum,
    x: &CurrentField,
    strategy: MatvecStrategy,
    ws: &mut Workspace,
) -> Result<CurrentField> {
    if x.dims() != map.dims() {
        return Err(Error::DimensionMismatch(format!("field {:?} vs map {:?}", x.dims(), map.dims())));
    }
    let nx = apply_operator_with(n_op, x, strategy, ws)?;
    let nv = map.voxels();
    let mut y = nx.into_vec();
    for (idx, (yv, xv)) in y.iter_mut().zip(x.data()).enumerate() {
        let v = idx % nv;
        *yv = map.eps_r[v] * xv - map.chi(v) * *yv;
    }
    CurrentField::from_vec(map.dims(), y)
}

/// Total fields on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Fields {
    pub e: CurrentField,
    pub h: CurrentField,
}

/// Electric and magnetic fields from the polarization current.
///
/// Inside the scatterer `e = j / (c_e chi_e)`; on background voxels (where
/// that inversion is undefined) `e = e_inc + (N j - j) / c_e`. Everywhere
/// `h = h_inc + K j`.
pub fn recover_fields(
    j: &CurrentField,
    map: &DielectricMap,
    grid: &VoxelGrid,
    inc: &PlaneWave,
    ops: &GridOperators,
) -> Result<Fields> {
    check_dims(grid, map)?;
    if j.dims() != grid.dims {
        return Err(Error::DimensionMismatch("current does not match the grid".into()));
    }
    let k_op = ops
        .k
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("field recovery needs the K operator".into()))?;
    let k0 = map.k0();
    let ce = map.ce();
    let nv = map.voxels();
    let policy = ScratchPolicy::minimal_for(ops.strategy);

    let any_background = (0..nv).any(|v| map.is_background(v));
    let nj = if any_background {
        let mut ws = Workspace::new(&ops.n, policy);
        Some(apply_operator_with(&ops.n, j, ops.strategy, &mut ws)?)
    } else {
        None
    };
    let mut e = incident_e(grid, k0, inc);
    for (idx, ev) in e.data_mut().iter_mut().enumerate() {
        let v = idx % nv;
        let chi = map.chi(v);
        if chi == Complex64::default() {
            let nj = nj.as_ref().expect("computed when background voxels exist");
            *ev += (nj.data()[idx] - j.data()[idx]) / ce;
        } else {
            *ev = j.data()[idx] / (ce * chi);
        }
    }

    let mut ws = Workspace::new(k_op, policy);
    let kj = apply_operator_with(k_op, j, ops.strategy, &mut ws)?;
    let mut h = incident_h(grid, k0, inc);
    for (hv, s) in h.data_mut().iter_mut().zip(kj.data()) {
        *hv += s;
    }
    Ok(Fields { e, h })
}

/// Absorbed power density, its volume integral, and `|b1+|`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMaps {
    /// `sigma |e|^2 / 2` per voxel (W/m^3).
    pub p_abs: Vec<f64>,
    /// Sum of `p_abs` times the voxel volume (W).
    pub total_absorbed: f64,
    /// `mu0 |h_x + i h_y|` per voxel (T).
    pub b1_plus: Vec<f64>,
}

pub fn postprocess(e: &CurrentField, h: &CurrentField, map: &DielectricMap, grid: &VoxelGrid) -> Result<PowerMaps> {
    check_dims(grid, map)?;
    if e.dims() != grid.dims || h.dims() != grid.dims {
        return Err(Error::DimensionMismatch("fields do not match the grid".into()));
    }
    let nv = map.voxels();
    let p_abs: Vec<f64> = (0..nv)
        .map(|v| {
            let e2: f64 = Axis::ALL.iter().map(|&a| e.component(a)[v].norm_sqr()).sum();
            0.5 * map.sigma(v) * e2
        })
        .collect();
    let total_absorbed = p_abs.iter().sum::<f64>() * grid.voxel_volume();
    let i = Complex64::new(0.0, 1.0);
    let b1_plus = (0..nv)
        .map(|v| MU0 * (h.component(Axis::X)[v] + i * h.component(Axis::Y)[v]).norm())
        .collect();
    Ok(PowerMaps {
        p_abs,
        total_absorbed,
        b1_plus,
    })
}

/// Everything a solve produces.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub current: CurrentField,
    pub fields: Fields,
    pub power: PowerMaps,
    pub gmres: GmresOutcome,
    pub summary: SolveSummary,
}

/// Scalar results of a solve, serialised as the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub dims: [usize; 3],
    pub resolution: [f64; 3],
    pub frequency: f64,
    pub strategy: MatvecStrategy,
    pub compression_tol: Option<f64>,
    pub gmres: GmresConfig,
    pub converged: bool,
    pub iterations: usize,
    pub cycles: usize,
    pub relative_residual: f64,
    pub residual_history: Vec<f64>,
    pub total_absorbed_power: f64,
    pub assembly_seconds: f64,
    pub compression_seconds: f64,
    pub solve_seconds: f64,
    pub compression: Option<CompressionStats>,
}

/// Builds the operators for `settings` and solves the scattering problem.
pub fn solve(
    grid: &VoxelGrid,
    map: &DielectricMap,
    inc: &PlaneWave,
    settings: &OperatorSettings,
    cfg: &GmresConfig,
) -> Result<SolveReport> {
    check_dims(grid, map)?;
    let ops = GridOperators::build(grid, map.k0(), settings, true)?;
    solve_with(grid, map, inc, &ops, cfg, settings.tol)
}

/// As [`solve`] with prebuilt operators (they must match `map`'s `k0`).
pub fn solve_with(
    grid: &VoxelGrid,
    map: &DielectricMap,
    inc: &PlaneWave,
    ops: &GridOperators,
    cfg: &GmresConfig,
    tol: f64,
) -> Result<SolveReport> {
    let rhs = build_rhs(map, inc, grid)?;
    let start = Instant::now();
    let mut ws = Workspace::new(&ops.n, ScratchPolicy::minimal_for(ops.strategy));
    let dims = grid.dims;
    let outcome = gmres(
        |v| {
            let x = CurrentField::from_vec(dims, v.to_vec())?;
            Ok(apply_system_with(map, &ops.n, &x, ops.strategy, &mut ws)?.into_vec())
        },
        rhs.data(),
        cfg,
        None,
    )?;
    let solve_seconds = start.elapsed().as_secs_f64();
    let current = CurrentField::from_vec(dims, outcome.solution.clone())?;
    let fields = recover_fields(&current, map, grid, inc, ops)?;
    let power = postprocess(&fields.e, &fields.h, map, grid)?;
    let summary = SolveSummary {
        dims,
        resolution: grid.resolution,
        frequency: map.frequency(),
        strategy: ops.strategy,
        compression_tol: (ops.strategy != MatvecStrategy::Dense).then_some(tol),
        gmres: *cfg,
        converged: outcome.converged,
        iterations: outcome.iterations,
        cycles: outcome.cycles,
        relative_residual: outcome.relative_residual,
        residual_history: outcome.residuals.clone(),
        total_absorbed_power: power.total_absorbed,
        assembly_seconds: ops.assembly_seconds,
        compression_seconds: ops.compression_seconds,
        solve_seconds,
        compression: ops.n_compression(),
    };
    Ok(SolveReport {
        current,
        fields,
        power,
        gmres: outcome,
        summary,
    })
}
