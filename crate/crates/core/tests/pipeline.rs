use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use swarm_pde::config::{bundled, parse_config, ScenarioConfig};
use swarm_pde::grid::{Grid, IndicatorField, Rect, Region};
use swarm_pde::io;
use swarm_pde::pipeline::{run_pipeline, run_pipeline_with_region};

fn smoke(out: &Path) -> ScenarioConfig {
    let mut cfg = parse_config(bundled("smoke").unwrap()).unwrap();
    cfg.output.dir = out.to_path_buf();
    cfg
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn listed_files(dir: &Path) -> BTreeSet<String> {
    manifest(dir)["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap().to_string()).collect()
}

fn files_on_disk(dir: &Path) -> BTreeSet<String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect()
}

#[test]
fn mapping_only_run_writes_map_files_and_lists_them() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = smoke(tmp.path());
    cfg.coverage.enabled = false;
    let out = run_pipeline(&cfg).unwrap();
    let files = listed_files(&out.dir);
    for name in ["config.toml", "H_hat.csv", "H_thresh.csv", "H_true.csv", "objective_history.csv", "summary.json"] {
        assert!(files.contains(name), "{name} missing from {files:?}");
    }
    assert_eq!(files, files_on_disk(&out.dir));
    let m = manifest(&out.dir);
    assert_eq!(m["config_sha256"], cfg.hash());
    assert_eq!(m["data_source"], "micro");
    let h = io::read_field(&out.dir.join("H_thresh.csv")).unwrap();
    assert!(h.values().iter().all(|&v| v == 0.0 || v == 1.0));
    assert!(out.coverage.is_none());
    let mis = out.mapping.unwrap().misclassified;
    assert!(mis < 0.05, "{mis}");
}

#[test]
fn full_run_lists_every_file_and_records_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = smoke(tmp.path());
    let out = run_pipeline(&cfg).unwrap();
    let files = listed_files(&out.dir);
    assert_eq!(files, files_on_disk(&out.dir));
    for name in ["controls.csv", "J_history.csv", "y3_target.csv", "summary.json"] {
        assert!(files.contains(name), "{name} missing");
    }
    let text = std::fs::read_to_string(out.dir.join("config.toml")).unwrap();
    assert_eq!(parse_config(&text).unwrap(), cfg);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.dir.join("summary.json")).unwrap()).unwrap();
    let cov = &summary["coverage"];
    assert!(cov["final_objective"].as_f64().unwrap() <= cov["initial_objective"].as_f64().unwrap());
    assert!(summary["validation"]["l1_to_macro"].as_f64().is_some());
}

#[test]
fn reruns_go_to_fresh_directories_with_equal_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = smoke(tmp.path());
    cfg.coverage.enabled = false;
    let a = run_pipeline(&cfg).unwrap().dir;
    let b = run_pipeline(&cfg).unwrap().dir;
    assert_ne!(a, b);
    assert_eq!(std::fs::read(a.join("manifest.json")).unwrap(), std::fs::read(b.join("manifest.json")).unwrap());
    cfg.micro.seed += 1;
    let c = run_pipeline(&cfg).unwrap().dir;
    assert_ne!(std::fs::read(a.join("manifest.json")).unwrap(), std::fs::read(c.join("manifest.json")).unwrap());
}

#[test]
fn stage_errors_name_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = smoke(tmp.path());
    cfg.mapping.enabled = false;
    let wrong = Grid::new(Rect::new(0.0, 100.0, 0.0, 100.0), 8, 8).unwrap();
    let region = IndicatorField::from_region(wrong, &Region::parse("disk:50,50,20").unwrap());
    let err = run_pipeline_with_region(&cfg, Some(region)).unwrap_err().to_string();
    assert!(err.starts_with("stage `coverage` failed"), "{err}");
    let err = run_pipeline(&cfg).unwrap_err().to_string();
    assert!(err.starts_with("stage `coverage` failed: invalid argument: no region"), "{err}");
}

#[test]
fn coverage_only_run_uses_the_given_region() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = smoke(tmp.path());
    cfg.mapping.enabled = false;
    cfg.micro.validate = false;
    let grid = cfg.grid().unwrap();
    let region = IndicatorField::from_region(grid, &Region::parse("rect:40,80,40,80").unwrap());
    let out = run_pipeline_with_region(&cfg, Some(region.clone())).unwrap();
    assert_eq!(io::read_field(&out.dir.join("H_coverage.csv")).unwrap(), *region.field());
    assert!(out.mapping.is_none() && out.validation.is_none());
    assert!(manifest(&out.dir)["data_source"].is_null());
}

fn cli(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_swarm-pde")).args(args).env("RUST_LOG", "warn").output().unwrap();
    (out.status.success(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

#[test]
fn cli_writes_configs_and_runs_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let (ok, list, _) = cli(&["make-config", "--list"]);
    assert!(ok && list.lines().any(|l| l == "smoke"), "{list}");

    let (ok, path, err) = cli(&["make-config", "smoke", "--out", dir]);
    assert!(ok, "{err}");
    let config = path.trim().to_string();
    assert_eq!(std::fs::read_to_string(&config).unwrap(), bundled("smoke").unwrap());

    let runs = tmp.path().join("runs");
    let runs = runs.to_str().unwrap();
    let (ok, run_dir, err) = cli(&["pipeline", "--config", &config, "--out", runs, "--seed", "3", "--threads", "2"]);
    assert!(ok, "{err}");
    let run_dir = Path::new(run_dir.trim());
    assert_eq!(manifest(run_dir)["seeds"]["mapping"], 3);
    assert_eq!(listed_files(run_dir), files_on_disk(run_dir));

    let controls = run_dir.join("controls.csv");
    let (ok, sim_dir, err) = cli(&[
        "simulate",
        "--config",
        &config,
        "--out",
        runs,
        "--kind",
        "coverage",
        "--controls",
        controls.to_str().unwrap(),
        "--map",
        run_dir.join("H_thresh.csv").to_str().unwrap(),
    ]);
    assert!(ok, "{err}");
    assert!(Path::new(sim_dir.trim()).join("manifest.json").exists());

    let map = run_dir.join("H_thresh.csv");
    let (ok, cov_dir, err) = cli(&["coverage", "--config", &config, "--out", runs, "--map", map.to_str().unwrap()]);
    assert!(ok, "{err}");
    let cov_dir = Path::new(cov_dir.trim());
    assert_eq!(std::fs::read(cov_dir.join("H_coverage.csv")).unwrap(), std::fs::read(&map).unwrap());
    assert!(!cov_dir.join("H_hat.csv").exists());
}

#[test]
fn cli_gradient_check_prints_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("smoke.toml");
    std::fs::write(&config, bundled("smoke").unwrap()).unwrap();
    let (ok, text, err) = cli(&["check-gradient", "--config", config.to_str().unwrap(), "--directions", "3"]);
    assert!(ok, "{err}");
    assert!(text.contains("max rel err"), "{text}");
    assert_eq!(text.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).count(), 3);
}

#[test]
fn cli_reports_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    std::fs::write(&config, bundled("smoke").unwrap().replace("nx = 20", "nx = 20\nbogus = 1")).unwrap();
    let (ok, _, err) = cli(&["pipeline", "--config", config.to_str().unwrap()]);
    assert!(!ok);
    assert!(err.starts_with("error: config error at line"), "{err}");
    let (ok, _, err) = cli(&["make-config", "nope"]);
    assert!(!ok && err.contains("smoke"), "{err}");
}
