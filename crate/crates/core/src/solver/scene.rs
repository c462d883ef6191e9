//! Scene input and solve output on disk.
//!
//! A scene is a JSON manifest plus a raw permittivity volume of `(re, im)`
//! little-endian f64 pairs, one per voxel in grid order (x fastest).
//! A solve writes `report.json` and the volumes `current.raw`, `e.raw`,
//! `h.raw` (three complex components, component-major) and `p_abs.raw`,
//! `b1_plus.raw` (one little-endian f64 per voxel).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{DielectricMap, PlaneWave, SolveReport};
use crate::assembly::VoxelGrid;
use crate::container::{read_raw_volume, write_manifest, write_raw_volume};
use crate::error::{Error, Result};

pub const SCENE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub version: u32,
    pub grid: VoxelGrid,
    /// Hz.
    pub frequency: f64,
    #[serde(default)]
    pub incident: PlaneWave,
    /// Raw permittivity volume, relative to the manifest's directory.
    pub permittivity: PathBuf,
}

/// Reads a scene manifest and its permittivity volume.
pub fn load_scene(path: &Path) -> Result<(VoxelGrid, DielectricMap, PlaneWave)> {
    let manifest: SceneManifest = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if manifest.version != SCENE_VERSION {
        return Err(Error::Format(format!("unsupported scene version {}", manifest.version)));
    }
    manifest.grid.validate()?;
    manifest.incident.validate()?;
    let volume = match path.parent() {
        Some(dir) => dir.join(&manifest.permittivity),
        None => manifest.permittivity.clone(),
    };
    let mut r = BufReader::new(File::open(&volume)?);
    let eps = read_raw_volume(&mut r, manifest.grid.voxel_count())?;
    let map = DielectricMap::new(manifest.grid.dims, eps, manifest.frequency)?;
    Ok((manifest.grid, map, manifest.incident))
}

/// Writes `<dir>/<name>.json` and `<dir>/<name>.eps.raw`.
pub fn save_scene(dir: &Path, name: &str, grid: &VoxelGrid, map: &DielectricMap, incident: &PlaneWave) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let volume = format!("{name}.eps.raw");
    let mut w = BufWriter::new(File::create(dir.join(&volume))?);
    write_raw_volume(&mut w, map.eps_r())?;
    w.flush()?;
    let manifest = SceneManifest {
        version: SCENE_VERSION,
        grid: *grid,
        frequency: map.frequency(),
        incident: *incident,
        permittivity: PathBuf::from(volume),
    };
    let path = dir.join(format!("{name}.json"));
    write_manifest(&path, &manifest)?;
    Ok(path)
}

fn write_real_volume(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for &v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.flush()?;
    Ok(())
}

fn write_complex_volume(path: &Path, values: &[num_complex::Complex64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_raw_volume(&mut w, values)?;
    w.flush()?;
    Ok(())
}

/// Writes the JSON summary and raw field volumes of `report` into `dir`.
pub fn write_report(dir: &Path, report: &SolveReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_manifest(&dir.join("report.json"), &report.summary)?;
    write_complex_volume(&dir.join("current.raw"), report.current.data())?;
    write_complex_volume(&dir.join("e.raw"), report.fields.e.data())?;
    write_complex_volume(&dir.join("h.raw"), report.fields.h.data())?;
    write_real_volume(&dir.join("p_abs.raw"), &report.power.p_abs)?;
    write_real_volume(&dir.join("b1_plus.raw"), &report.power.b1_plus)?;
    Ok(())
}
