//! Subcommands: run an experiment, write its outputs and the run manifest.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use vie_core::container::write_manifest;
use vie_core::fft_operator::BenchRecord;
use vie_core::mie::{mie_with, BesselPath, MieSphere};
use vie_core::solver::{load_scene, lossy_permittivity, save_scene, solve, wavenumber, write_report};
use vie_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::manifest::write_run_manifest;
use crate::scenes::operator_settings;
use crate::{bench, compress_report, phantom, rank_sweep, sphere};

/// What a subcommand wrote and whether every solve converged.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub files: Vec<PathBuf>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    RankSweep,
    CompressReport,
    MatvecBench,
    SphereValidate,
    PhantomSolve,
    Mie,
    Solve,
}

impl Subcommand {
    pub const ALL: [Subcommand; 7] = [
        Subcommand::RankSweep,
        Subcommand::CompressReport,
        Subcommand::MatvecBench,
        Subcommand::SphereValidate,
        Subcommand::PhantomSolve,
        Subcommand::Mie,
        Subcommand::Solve,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::RankSweep => "rank-sweep",
            Subcommand::CompressReport => "compress-report",
            Subcommand::MatvecBench => "matvec-bench",
            Subcommand::SphereValidate => "sphere-validate",
            Subcommand::PhantomSolve => "phantom-solve",
            Subcommand::Mie => "mie",
            Subcommand::Solve => "solve",
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.into())
}

/// Writes serde rows as CSV with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn write_bench_csv(path: &Path, rows: &[BenchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(BenchRecord::CSV_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record(r.csv_fields()).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `cmd` with `cfg` (overrides already applied) and writes into `cfg.out`.
pub fn run(cmd: Subcommand, cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let out = cfg.out.as_path();
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut converged = true;
    match cmd {
        Subcommand::RankSweep => {
            let rows = rank_sweep::run(cfg)?;
            let path = out.join("rank_sweep.csv");
            write_csv(&path, &rows)?;
            files.push(path);
        }
        Subcommand::CompressReport => {
            let rows = compress_report::run(cfg)?;
            let path = out.join("compress_report.csv");
            write_csv(&path, &rows)?;
            files.push(path);
        }
        Subcommand::MatvecBench => {
            let rows = bench::run(cfg)?;
            let path = out.join("matvec_bench.csv");
            write_bench_csv(&path, &rows)?;
            files.push(path);
        }
        Subcommand::SphereValidate => {
            let report = sphere::run(cfg)?;
            converged = report.all_converged();
            let csv = out.join("sphere_validate.csv");
            write_csv(&csv, &report.rows)?;
            let json = out.join("sphere_validate.json");
            write_manifest(&json, &report)?;
            files.extend([csv, json]);
        }
        Subcommand::PhantomSolve => {
            let outcome = phantom::run(cfg)?;
            converged = outcome.all_converged();
            let csv = out.join("phantom_errors.csv");
            write_csv(&csv, &outcome.rows)?;
            let json = out.join("phantom_timing.json");
            write_manifest(
                &json,
                &serde_json::json!({
                    "assembly_seconds": outcome.assembly_seconds,
                    "solves": outcome.timings,
                }),
            )?;
            let scene = save_scene(out, "phantom", &outcome.grid, &outcome.map, &cfg.phantom.incident)?;
            let reference = out.join("reference");
            write_report(&reference, &outcome.reference)?;
            files.extend([csv, json, scene, reference]);
        }
        Subcommand::Mie => {
            let m = &cfg.mie;
            let eps = lossy_permittivity(m.eps_real, m.sigma, m.frequency);
            let mut s = MieSphere::new(m.radius, eps, wavenumber(m.frequency), m.amplitude);
            s.orders = m.orders;
            let result = mie_with(&s, BesselPath::LogDerivative)?;
            let path = out.join("mie.json");
            write_manifest(&path, &result)?;
            files.push(path);
        }
        Subcommand::Solve => {
            let (grid, map, inc) = load_scene(&cfg.solve.scene)?;
            let tol = cfg.tol.unwrap_or(cfg.solve.tol);
            let settings = operator_settings(cfg, cfg.solve.strategy, tol, cfg.solve.rule);
            let report = solve(&grid, &map, &inc, &settings, &cfg.gmres)?;
            converged = report.summary.converged;
            write_report(out, &report)?;
            files.extend(
                ["report.json", "current.raw", "e.raw", "h.raw", "p_abs.raw", "b1_plus.raw"].map(|f| out.join(f)),
            );
        }
    }
    let manifest = write_run_manifest(out, cmd.name(), cfg, &files, converged)?;
    files.push(manifest);
    Ok(CommandOutcome { files, converged })
}
