use std::path::{Path, PathBuf};
use std::process::Output;

use nosig_core::protocol::{pb_total, prepare, PipelineOptions};
use nosig_core::spin::MeasurementAxis;
use serde_json::Value;

const DEFAULT_CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.json");

fn nosig(args: &[&str], config: &Path, out: &Path) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_nosig"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Writes a copy of the default config with `edit` applied.
fn variant(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(DEFAULT_CONFIG).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn verify_default_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = nosig(&["verify"], Path::new(DEFAULT_CONFIG), dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(dir.path().join("report.json"));
    assert_eq!(report["pass"], true);
    assert!(report["max_abs_residual"].as_f64().unwrap() < 1e-9);
    assert!(report["max_phase_gap"].as_f64().unwrap() <= 1e-9);
    assert!(dir.path().join("metadata.json").exists());
}

#[test]
fn verify_injected_violation_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = nosig(&["verify", "--inject-violation", "0.1"], Path::new(DEFAULT_CONFIG), dir.path());
    assert_eq!(code(&out), 1);
    let report = read_json(dir.path().join("report.json"));
    assert_eq!(report["pass"], false);
    assert!(report["max_abs_residual"].as_f64().unwrap() > 1e-3);
}

#[test]
fn verify_zero_gradient_is_degenerate_but_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "flat.json", |v| {
        v["sg"]["gradient"] = 0.0.into();
        v["samples"] = 0.into();
    });
    let out = nosig(&["verify"], &cfg, dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));
    let report = read_json(dir.path().join("report.json"));
    assert_eq!(report["degenerate"], true);
    assert!((report["Es"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    for s in report["settings"].as_array().unwrap() {
        assert_eq!(s["case_b_phase_defined"], false);
    }
}

#[test]
fn config_errors_exit_2_with_line_context() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(DEFAULT_CONFIG).unwrap().replace("\"root_seed\"", "\"rootseed\"");
    let cfg = dir.path().join("typo.json");
    std::fs::write(&cfg, &text).unwrap();
    let out = nosig(&["verify"], &cfg, dir.path());
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().position(|l| l.contains("rootseed")).unwrap() + 1;
    assert!(err.contains(&format!("typo.json:{line}:")), "{err}");
    assert!(err.contains("rootseed"), "{err}");

    let out = nosig(&["verify"], &dir.path().join("missing.json"), dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn sweep_rows_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = nosig(&["sweep"], Path::new(DEFAULT_CONFIG), dir.path());
    assert_eq!(code(&out), 0);
    let mut reader = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, nosig_cli::sweep::COLUMNS);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 9 * 13);

    let config = nosig_cli::RunConfig::load(Path::new(DEFAULT_CONFIG)).unwrap();
    let f = |r: &csv::StringRecord, i: usize| r[i].parse::<f64>().unwrap();
    for &k in &[14usize, 58, 100] {
        let row = &rows[k];
        let prep = prepare(&config.sg, MeasurementAxis::new(f(row, 0)), &PipelineOptions::default()).unwrap();
        let expected = prep.measure(MeasurementAxis::new(f(row, 1)));
        assert_eq!(f(row, 7), expected.pa_total);
        assert_eq!(f(row, 10), expected.pb_total);
        assert!((f(row, 10) - pb_total(f(row, 2), f(row, 1)).unwrap()).abs() < 1e-12);
    }
    for row in rows.iter().filter(|r| f(r, 1) == 0.0) {
        assert_eq!(f(row, 11), 0.0);
    }
}

#[test]
fn sweep_ideal_limit_has_zero_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "ideal.json", |v| v["sg"]["gradient"] = 8000.0.into());
    let out = nosig(&["sweep"], &cfg, dir.path());
    assert_eq!(code(&out), 0);
    let mut reader = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    for row in reader.records() {
        let row = row.unwrap();
        assert!(row[2].parse::<f64>().unwrap() < 1e-30);
        assert!(row[11].parse::<f64>().unwrap().abs() < 1e-15, "{row:?}");
    }
}

fn bounds(path: PathBuf) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|v| v["status"] == "ok")
        .map(|v| v["experiment"]["bound"].clone())
        .collect()
}

#[test]
fn estimate_contains_zero_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&nosig(&["estimate", "--seed", "77"], Path::new(DEFAULT_CONFIG), &a)), 0);
    assert_eq!(code(&nosig(&["estimate", "--seed", "77"], Path::new(DEFAULT_CONFIG), &b)), 0);
    let bytes = std::fs::read(a.join("estimates.jsonl")).unwrap();
    assert_eq!(bytes, std::fs::read(b.join("estimates.jsonl")).unwrap());
    let big = bounds(a.join("estimates.jsonl"));
    assert_eq!(big.len(), 7);
    assert!(big.iter().all(|b| b["consistent"] == true));

    let c = dir.path().join("c");
    assert_eq!(code(&nosig(&["estimate", "--seed", "78"], Path::new(DEFAULT_CONFIG), &c)), 0);
    assert_ne!(bytes, std::fs::read(c.join("estimates.jsonl")).unwrap());
}

#[test]
fn estimate_small_sample_has_wider_interval() {
    let dir = tempfile::tempdir().unwrap();
    let small_cfg = variant(dir.path(), "small.json", |v| v["samples"] = 1000.into());
    assert_eq!(code(&nosig(&["estimate"], &small_cfg, &dir.path().join("small"))), 0);
    assert_eq!(code(&nosig(&["estimate"], Path::new(DEFAULT_CONFIG), &dir.path().join("big"))), 0);
    let width = |b: &Value| b["ci"]["hi"].as_f64().unwrap() - b["ci"]["lo"].as_f64().unwrap();
    let small = bounds(dir.path().join("small/estimates.jsonl"));
    let big = bounds(dir.path().join("big/estimates.jsonl"));
    for (s, b) in small.iter().zip(&big) {
        assert_eq!(s["consistent"], true);
        assert!(width(s) > 10.0 * width(b));
    }

    let tiny = variant(dir.path(), "tiny.json", |v| v["samples"] = 10.into());
    assert_eq!(code(&nosig(&["estimate"], &tiny, dir.path())), 2);
}

#[test]
fn estimate_detects_injected_violation() {
    let dir = tempfile::tempdir().unwrap();
    let out = nosig(&["estimate", "--inject-violation", "0.1"], Path::new(DEFAULT_CONFIG), dir.path());
    assert_eq!(code(&out), 1);
    assert!(bounds(dir.path().join("estimates.jsonl")).iter().all(|b| b["consistent"] == false));
}

#[test]
fn oracle_free_particle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "free.json", |v| {
        v["sg"]["transit"] = 0.0.into();
    });
    let out = nosig(&["oracle"], &cfg, dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(dir.path().join("oracle.json"));
    assert!(report["max_density_l1"].as_f64().unwrap() < 1e-6, "{}", report["max_density_l1"]);
}

#[test]
fn oracle_impulsive_default_agrees() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&nosig(&["oracle"], Path::new(DEFAULT_CONFIG), dir.path())), 0);
    let report = read_json(dir.path().join("oracle.json"));
    assert_eq!(report["regime"], "impulsive");
    assert!(report["max_e_diff"].as_f64().unwrap() < 1e-3);
    assert!(report["note"].is_null());
}

#[test]
fn oracle_non_impulsive_disagreement_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "strong.json", |v| {
        v["sg"]["transit"] = 1.0.into();
        v["sg"]["gradient"] = 1.0.into();
        v["sg"]["bias"] = 0.0.into();
    });
    let out = nosig(&["oracle"], &cfg, dir.path());
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(dir.path().join("oracle.json"));
    assert_eq!(report["regime"], "non-impulsive");
    assert!(report["max_e_diff"].as_f64().unwrap() > 1e-3);
    assert!(report["note"].as_str().unwrap().contains("impulsive"));
}

#[test]
fn oracle_coarse_grid_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "coarse.json", |v| v["oracle"]["points"] = 256.into());
    let out = nosig(&["oracle"], &cfg, dir.path());
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("oracle.points"));
}
