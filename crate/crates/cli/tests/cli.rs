use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nonconv"))
}

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_iid_preset_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().arg("simulate").arg(preset("iid_product.cfg")).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["sums.csv", "tails.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let names: Vec<&str> = m["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["exact_mean", "concentration", "variance_envelope"]);
    let csv = std::fs::read_to_string(dir.path().join("sums.csv")).unwrap();
    assert!(!csv.contains('\r'));
}

#[test]
fn worker_count_does_not_change_csvs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, w) in [(&a, "1"), (&b, "8")] {
        let o = bin()
            .args(["simulate", preset("rademacher_product.cfg").to_str().unwrap(), "--workers", w, "--replicates", "300", "--out-dir"])
            .arg(dir.path())
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["sums.csv", "tails.csv", "kolmogorov.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_and_grid_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["simulate", preset("rademacher_product.cfg").to_str().unwrap(), "--seed", "99", "--n-grid", "8,32", "--replicates", "200", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["master_seed"], 99);
    assert_eq!(m["n_grid"], serde_json::json!([8, 32]));
}

#[test]
fn too_few_replicates_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().arg("simulate").arg(preset("iid_product.cfg")).args(["--replicates", "10", "--out-dir"]).arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_model_key_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[model]\nkind = iid\natoms = [0, 1]\n\n[observable]\nkind = sum\narity = 1\n").unwrap();
    let o = bin().arg("simulate").arg(&cfg).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line "), "{err}");
}

#[test]
fn budget_error_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .arg("simulate")
        .arg(preset("iid_product.cfg"))
        .arg("--out-dir")
        .arg(dir.path())
        .env("NONCONV_BUDGET_MB", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn berry_esseen_row() {
    let o = bin().args(["bounds", "berry-esseen", "--gamma", "1", "--delta", "8"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let row: Vec<f64> = out.lines().nth(1).unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    let c = (2f64.sqrt() / 6.0).cbrt() / 6.0;
    assert!((row[2] - c).abs() < 1e-15);
    assert!((row[3] - c / 2.0).abs() < 1e-15);
}

#[test]
fn moddev_outside_window() {
    let o = bin().args(["bounds", "moddev", "--x", "999", "--n", "100", "--c4", "1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("OUT_OF_WINDOW"));
}

#[test]
fn momthm_empty_sum_is_zero() {
    let o = bin().args(["bounds", "momthm", "--p", "2", "--n", "50"]).output().unwrap();
    let v: f64 = stdout(&o).lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(v, 0.0);
}

#[test]
fn bad_bound_parameters_exit_two() {
    let o = bin().args(["bounds", "berry-esseen", "--gamma", "1", "--delta", "-1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_suite_exits_two() {
    let o = bin().args(["verify", "everything"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_martingale_routes_to_decomposition_checks() {
    let o = bin().args(["verify", "martingale", "--reduced"]).output().unwrap();
    let out = stdout(&o);
    assert!(out.contains("C4 ") && out.contains("C5 "), "{out}");
    assert_eq!(o.status.code(), Some(0), "{out}");
}
