//! Versioned JSON experiment configuration.
//!
//! Every key has a default, so `{"version": 1}` is a valid config for any
//! subcommand. Command-line flags are applied on top with [`Overrides`].

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vie_core::assembly::QuadratureSpec;
use vie_core::decomp::{CpRankPolicy, TruncationRule, TuckerCpConfig};
use vie_core::fft_operator::MatvecStrategy;
use vie_core::solver::{GmresConfig, PlaneWave};
use vie_core::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Free-form run label, copied into the manifest.
    pub name: String,
    pub out: PathBuf,
    pub seed: u64,
    /// Restricts the strategies an experiment runs (all of its defaults when `None`).
    pub strategies: Option<Vec<MatvecStrategy>>,
    /// Replaces the experiment's tolerance sweep with this single value.
    pub tol: Option<f64>,
    pub quadrature: QuadratureSpec,
    pub gmres: GmresConfig,
    pub cp: CpSettings,
    pub rank_sweep: RankSweepConfig,
    pub compress_report: CompressReportConfig,
    pub matvec_bench: MatvecBenchConfig,
    pub sphere: SphereConfig,
    pub phantom: PhantomConfig,
    pub mie: MieConfig,
    pub solve: SolveConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            name: String::new(),
            out: PathBuf::from("out"),
            seed: 0,
            strategies: None,
            tol: None,
            quadrature: QuadratureSpec::default(),
            gmres: GmresConfig::default(),
            cp: CpSettings::default(),
            rank_sweep: RankSweepConfig::default(),
            compress_report: CompressReportConfig::default(),
            matvec_bench: MatvecBenchConfig::default(),
            sphere: SphereConfig::default(),
            phantom: PhantomConfig::default(),
            mie: MieConfig::default(),
            solve: SolveConfig::default(),
        }
    }
}

/// CP stage of Tucker+CP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpSettings {
    pub iterations: usize,
    pub rank: CpRankPolicy,
    pub stall_tol: f64,
    pub restarts: usize,
}

impl Default for CpSettings {
    fn default() -> Self {
        Self {
            iterations: 1000,
            rank: CpRankPolicy::MinTucker,
            stall_tol: 0.0,
            restarts: 0,
        }
    }
}

impl CpSettings {
    /// Tucker+CP settings at compression tolerance `tol`, seeded from `seed`.
    pub fn tucker_cp(&self, tol: f64, rule: TruncationRule, seed: u64) -> TuckerCpConfig {
        let mut cfg = TuckerCpConfig::new(tol, self.iterations);
        cfg.rule = rule;
        cfg.rank = self.rank;
        cfg.stall_tol = self.stall_tol;
        cfg.restarts = self.restarts;
        cfg.seed = seed;
        cfg
    }
}

/// Kernel family whose ranks a sweep reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentSet {
    /// The scalar Green's function.
    Scalar,
    /// All unique `N` components.
    N,
    /// All unique `K` components.
    K,
}

impl ComponentSet {
    pub fn name(self) -> &'static str {
        match self {
            ComponentSet::Scalar => "scalar",
            ComponentSet::N => "N",
            ComponentSet::K => "K",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSweepConfig {
    /// Hz.
    pub frequencies: Vec<f64>,
    /// Voxels per wavelength (10 means a voxel edge of `lambda / 10`).
    pub points_per_wavelength: Vec<u32>,
    pub component_sets: Vec<ComponentSet>,
    /// Edge of the cubic domain (m).
    pub domain_edge: f64,
    pub tol: f64,
    pub rule: TruncationRule,
    /// Rows whose estimated working set exceeds this are skipped.
    pub memory_limit_mb: f64,
}

impl Default for RankSweepConfig {
    fn default() -> Self {
        Self {
            frequencies: (1..=10).map(|i| 0.3e9 * i as f64).collect(),
            points_per_wavelength: vec![10],
            component_sets: vec![ComponentSet::Scalar],
            domain_edge: 1.0,
            tol: 1e-8,
            rule: TruncationRule::SigmaMax,
            memory_limit_mb: 2048.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressReportConfig {
    pub dims: [usize; 3],
    /// Voxel edge (m).
    pub resolution: f64,
    /// Hz.
    pub frequency: f64,
    pub tolerances: Vec<f64>,
    pub rules: Vec<TruncationRule>,
}

impl Default for CompressReportConfig {
    fn default() -> Self {
        Self {
            dims: [32, 32, 32],
            resolution: 5e-3,
            frequency: 298e6,
            tolerances: (4..=10).map(|e| 10f64.powi(-e)).collect(),
            rules: vec![TruncationRule::SigmaMax, TruncationRule::Energy],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatvecBenchConfig {
    /// Fourier array sizes per axis.
    pub sizes: Vec<usize>,
    pub rank: usize,
    pub repetitions: usize,
}

impl Default for MatvecBenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![32, 64, 96],
            rank: 25,
            repetitions: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereConfig {
    /// m.
    pub radius: f64,
    pub eps_real: f64,
    /// S/m.
    pub sigma: f64,
    /// Hz.
    pub frequency: f64,
    /// Edge of the cubic domain centred on the sphere (m).
    pub domain_edge: f64,
    /// Voxel edges (m).
    pub resolutions: Vec<f64>,
    pub methods: Vec<MatvecStrategy>,
    pub tol: f64,
    pub rule: TruncationRule,
    pub incident: PlaneWave,
}

impl Default for SphereConfig {
    fn default() -> Self {
        Self {
            radius: 0.15,
            eps_real: 65.0,
            sigma: 0.6,
            frequency: 298e6,
            domain_edge: 0.3,
            resolutions: vec![10e-3, 5e-3],
            methods: vec![
                MatvecStrategy::Dense,
                MatvecStrategy::HosvdDecompress,
                MatvecStrategy::TuckerCpDecompress,
            ],
            tol: 1e-8,
            rule: TruncationRule::Energy,
            incident: PlaneWave::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub dims: [usize; 3],
    /// Voxel edge (m).
    pub resolution: f64,
    /// Hz.
    pub frequency: f64,
    /// Concentric ellipsoids centred in the domain, outermost first; a voxel
    /// takes the innermost layer containing its centre.
    pub layers: Vec<LayerSpec>,
    pub tolerances: Vec<f64>,
    pub methods: Vec<MatvecStrategy>,
    pub rule: TruncationRule,
    pub incident: PlaneWave,
}

/// One shell of the layered phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub name: String,
    /// Semi-axes (m).
    pub semi_axes: [f64; 3],
    pub eps_real: f64,
    /// S/m.
    pub sigma: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        let layer = |name: &str, semi_axes, eps_real, sigma| LayerSpec {
            name: name.into(),
            semi_axes,
            eps_real,
            sigma,
        };
        Self {
            dims: [48, 48, 48],
            resolution: 5e-3,
            frequency: 298e6,
            layers: vec![
                layer("skin", [0.08, 0.1, 0.11], 50.0, 0.65),
                layer("skull", [0.073, 0.093, 0.103], 13.5, 0.08),
                layer("brain", [0.066, 0.086, 0.096], 52.0, 0.55),
                layer("ventricle", [0.015, 0.03, 0.02], 72.0, 2.2),
            ],
            tolerances: (4..=12).map(|e| 10f64.powi(-e)).collect(),
            methods: vec![MatvecStrategy::HosvdDecompress, MatvecStrategy::TuckerCpDecompress],
            rule: TruncationRule::Energy,
            incident: PlaneWave::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MieConfig {
    /// m.
    pub radius: f64,
    pub eps_real: f64,
    /// S/m.
    pub sigma: f64,
    /// Hz.
    pub frequency: f64,
    /// Incident amplitude (V/m).
    pub amplitude: f64,
    /// Series length (the usual `x + 4 x^(1/3) + 2` when `None`).
    pub orders: Option<usize>,
}

impl Default for MieConfig {
    fn default() -> Self {
        Self {
            radius: 0.15,
            eps_real: 65.0,
            sigma: 0.6,
            frequency: 298e6,
            amplitude: 1.0,
            orders: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// Scene manifest, relative to the config file.
    pub scene: PathBuf,
    pub strategy: MatvecStrategy,
    pub tol: f64,
    pub rule: TruncationRule,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            scene: PathBuf::from("scene.json"),
            strategy: MatvecStrategy::Dense,
            tol: 1e-8,
            rule: TruncationRule::Energy,
        }
    }
}

/// Flags that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub strategy: Option<MatvecStrategy>,
    pub tol: Option<f64>,
}

impl ExperimentConfig {
    /// Reads a config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if let Some(dir) = path.parent() {
            if cfg.solve.scene.is_relative() {
                cfg.solve.scene = dir.join(&cfg.solve.scene);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(s) = o.strategy {
            self.strategies = Some(vec![s]);
            self.solve.strategy = s;
        }
        if let Some(tol) = o.tol {
            self.tol = Some(tol);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Format(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if let Some(tol) = self.tol {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(Error::InvalidTolerance(tol));
            }
        }
        if matches!(&self.strategies, Some(s) if s.is_empty()) {
            return Err(Error::InvalidArgument("empty strategy list".into()));
        }
        self.quadrature.validate()?;
        self.gmres.validate()
    }

    /// The configured strategies filtered by the `strategies` selection.
    pub fn select(&self, defaults: &[MatvecStrategy]) -> Vec<MatvecStrategy> {
        match &self.strategies {
            Some(s) => s.clone(),
            None => defaults.to_vec(),
        }
    }

    /// `list`, or just the single override tolerance.
    pub fn tolerances(&self, list: &[f64]) -> Vec<f64> {
        match self.tol {
            Some(t) => vec![t],
            None => list.to_vec(),
        }
    }
}
