//! End-to-end runs of the `vie` binary on small configs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use num_complex::Complex64;
use serde_json::Value;
use tempfile::TempDir;
use vie_core::solver::{lossy_permittivity, save_scene, DielectricMap, PlaneWave};

fn vie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vie")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn run_ok(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = vie(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|x| x.unwrap()[idx].to_string()).collect()
}

#[test]
fn mie_writes_json_and_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"version": 1}"#);
    let out = dir.path().join("out");
    run_ok("mie", &cfg, &out, &[]);
    let mie = read_json(&out.join("mie.json"));
    let p = mie["p_abs"].as_f64().unwrap();
    // Default sphere (0.15 m, eps' 65, 0.6 S/m, 298 MHz) as pinned in the library tests.
    assert!((p - 9.282341939511623e-5).abs() <= 1e-12 * p);
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["subcommand"], "mie");
    assert_eq!(manifest["code_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config"]["mie"]["eps_real"], 65.0);
    assert_eq!(manifest["outputs"][0], "mie.json");
}

#[test]
fn input_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(vie(&["mie", "--config", missing.to_str().unwrap()]).status.code(), Some(1));
    for bad in [r#"{"version": 2}"#, r#"{"version": 1, "colour": 3}"#, "not json", r#"{"version": 1, "tol": -1}"#] {
        let cfg = write_config(dir.path(), "bad.json", bad);
        let o = vie(&["mie", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{bad}");
        assert!(!o.stderr.is_empty());
    }
    let cfg = write_config(dir.path(), "ok.json", r#"{"version": 1}"#);
    let o = vie(&["mie", "--config", cfg.to_str().unwrap(), "--strategy", "fastest"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(vie(&["teleport", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    // Physically invalid input surfaces as an input error too.
    let cfg = write_config(dir.path(), "neg.json", r#"{"version": 1, "mie": {"radius": -1.0}}"#);
    let o = vie(&["mie", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

fn small_scene(dir: &Path) {
    let n = 4;
    let grid = vie_cli::scenes::centred_grid([n; 3], 0.02).unwrap();
    let f = 298e6;
    let eps = lossy_permittivity(40.0, 0.5, f);
    let eps_r: Vec<Complex64> = (0..n * n * n)
        .map(|v| if v % 3 == 0 { Complex64::new(1.0, 0.0) } else { eps })
        .collect();
    let map = DielectricMap::new(grid.dims, eps_r, f).unwrap();
    save_scene(dir, "scene", &grid, &map, &PlaneWave::default()).unwrap();
}

#[test]
fn solve_writes_report_and_flags_non_convergence() {
    let dir = TempDir::new().unwrap();
    small_scene(dir.path());
    let cfg = write_config(dir.path(), "solve.json", r#"{"version": 1, "solve": {"scene": "scene.json"}}"#);
    let out = dir.path().join("out");
    run_ok("solve", &cfg, &out, &["--strategy", "hosvd_loop", "--tol", "1e-6"]);
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["converged"], true);
    assert_eq!(report["strategy"], "hosvd_loop");
    assert_eq!(report["compression_tol"], 1e-6);
    assert!(report["total_absorbed_power"].as_f64().unwrap() > 0.0);
    for (f, bytes) in [("current.raw", 48), ("e.raw", 48), ("h.raw", 48), ("p_abs.raw", 8), ("b1_plus.raw", 8)] {
        assert_eq!(fs::metadata(out.join(f)).unwrap().len(), 64 * bytes, "{f}");
    }

    let cfg = write_config(
        dir.path(),
        "short.json",
        r#"{"version": 1, "solve": {"scene": "scene.json"}, "gmres": {"tolerance": 1e-14, "inner": 2, "outer": 1}}"#,
    );
    let out = dir.path().join("short");
    let o = vie(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(read_json(&out.join("report.json"))["converged"], false);
    assert_eq!(read_json(&out.join("manifest.json"))["converged"], false);
}

#[test]
fn rank_sweep_full_dims_at_zero_tolerance_and_skips() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.json",
        r#"{"version": 1, "rank_sweep": {"frequencies": [3e8, 6e8], "component_sets": ["scalar", "k"]}}"#,
    );
    let out = dir.path().join("out");
    run_ok("rank-sweep", &cfg, &out, &["--tol", "0"]);
    let path = out.join("rank_sweep.csv");
    let n = column(&path, "grid_n");
    let r = column(&path, "max_rank");
    assert_eq!(n, ["11", "11", "21", "21"]);
    assert_eq!(n, r);

    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"version": 1, "rank_sweep": {"frequencies": [3e8, 3e9], "memory_limit_mb": 50}}"#,
    );
    let out = dir.path().join("skip");
    run_ok("rank-sweep", &cfg, &out, &[]);
    let path = out.join("rank_sweep.csv");
    assert_eq!(column(&path, "status"), ["ok", "skipped"]);
    assert_eq!(column(&path, "max_rank")[1], "");
    assert!(column(&path, "reason")[1].contains("MB"));
}

#[test]
fn compress_report_is_monotone_and_compresses() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"version": 1, "compress_report": {"dims": [20, 20, 20], "resolution": 0.01, "frequency": 3e8}}"#,
    );
    let out = dir.path().join("out");
    run_ok("compress-report", &cfg, &out, &[]);
    let path = out.join("compress_report.csv");
    let rows = csv_rows(&path);
    assert_eq!(rows.len(), 2 * 2 * 7);
    let ops = column(&path, "operator");
    let rules = column(&path, "rule");
    let bytes: Vec<usize> = column(&path, "compressed_bytes").iter().map(|s| s.parse().unwrap()).collect();
    let factor: Vec<f64> = column(&path, "compression_factor").iter().map(|s| s.parse().unwrap()).collect();
    for rule in ["sigma_max", "energy"] {
        assert!(rules.iter().any(|r| r == rule));
    }
    for block in 0..4 {
        let b = &bytes[7 * block..7 * block + 7];
        assert!(b.windows(2).all(|w| w[1] >= w[0]), "{} {}: {b:?}", ops[7 * block], rules[7 * block]);
    }
    assert!(factor.iter().all(|&f| f > 1.0), "{factor:?}");
}

#[test]
fn matvec_bench_rows_per_strategy() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "b.json",
        r#"{"version": 1, "matvec_bench": {"sizes": [6, 8], "rank": 3, "repetitions": 2}}"#,
    );
    let out = dir.path().join("out");
    run_ok("matvec-bench", &cfg, &out, &[]);
    let path = out.join("matvec_bench.csv");
    assert_eq!(csv_rows(&path).len(), 10);
    assert_eq!(column(&path, "ranks")[1], "3x3x3");
    assert_eq!(column(&path, "ranks")[0], "6x6x6");

    let out = dir.path().join("one");
    run_ok("matvec-bench", &cfg, &out, &["--strategy", "tucker_cp_loop"]);
    assert_eq!(column(&out.join("matvec_bench.csv"), "strategy"), ["tucker_cp_loop", "tucker_cp_loop"]);
}

const SMALL_PHANTOM: &str = r#"{
  "version": 1,
  "phantom": {
    "dims": [10, 10, 10],
    "resolution": 0.02,
    "layers": [
      {"name": "outer", "semi_axes": [0.09, 0.08, 0.085], "eps_real": 40.0, "sigma": 0.5},
      {"name": "inner", "semi_axes": [0.04, 0.05, 0.045], "eps_real": 60.0, "sigma": 1.0}
    ],
    "tolerances": [1e-3, 1e-6]
  },
  "cp": {"iterations": 40}
}"#;

#[test]
fn phantom_csv_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "p.json", SMALL_PHANTOM);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok("phantom-solve", &cfg, &a, &["--seed", "11"]);
    run_ok("phantom-solve", &cfg, &b, &["--seed", "11"]);
    let csv_a = fs::read(a.join("phantom_errors.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("phantom_errors.csv")).unwrap());
    assert_eq!(csv_rows(&a.join("phantom_errors.csv")).len(), 4);
    let err: Vec<f64> = column(&a.join("phantom_errors.csv"), "p_abs_error")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    assert!(err[1] < err[0], "HOSVD error shrinks with the tolerance: {err:?}");
    assert!(a.join("reference/p_abs.raw").exists());
    assert!(a.join("phantom.json").exists());
    assert_eq!(read_json(&a.join("manifest.json"))["config"]["seed"], 11);
}

#[test]
fn sphere_validate_small_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"version": 1, "sphere": {"resolutions": [0.05, 0.0375]}, "cp": {"iterations": 50}}"#,
    );
    let out = dir.path().join("out");
    run_ok("sphere-validate", &cfg, &out, &[]);
    let path = out.join("sphere_validate.csv");
    assert_eq!(column(&path, "method"), ["dense", "hosvd_decompress", "tucker_cp_decompress"].repeat(2));
    assert_eq!(column(&path, "grid_n"), ["6", "6", "6", "8", "8", "8"]);
    let p: Vec<f64> = column(&path, "absorbed_power_w").iter().map(|s| s.parse().unwrap()).collect();
    assert!(((p[1] - p[0]) / p[0]).abs() <= 1e-3);
    let json = read_json(&out.join("sphere_validate.json"));
    assert_eq!(json["rows"].as_array().unwrap().len(), 6);
    assert!(json["mie"]["p_abs"].as_f64().unwrap() > 0.0);
}
