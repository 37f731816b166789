use std::path::Path;
use std::process::{Command, Output};

fn smdlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smdlab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn fuzz_small_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = smdlab(&["fuzz", "--trials", "15", "--out", "f"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let v = stdout_json(&out);
    assert_eq!(v["trials"], 15);
    assert!(v["max_identity_residual"].as_f64().unwrap() <= 1e-9);
    assert!(dir.path().join("f/report.json").exists());
    assert!(dir.path().join("f/manifest.json").exists());
}

#[test]
fn zero_steps_emit_only_w0() {
    let dir = tempfile::tempdir().unwrap();
    let out = smdlab(&["run", "--steps", "0", "--out", "r"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("r/trace.csv")).unwrap();
    let rows: Vec<&str> = trace.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("0,"));
    let iterates = std::fs::read_to_string(dir.path().join("r/iterates.csv")).unwrap();
    assert_eq!(iterates.lines().count(), 2);
    assert_eq!(stdout_json(&out)["run"]["steps"], 0);
}

#[test]
fn config_errors_exit_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "scenario = \"cs_demo\"\n[potential]\nq = = 1\n").unwrap();
    let out = smdlab(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    let text = include_str!("../configs/cs_demo.toml").replace("q = 1.1", "q = 3.0");
    std::fs::write(dir.path().join("bad_q.toml"), text).unwrap();
    let out = smdlab(&["run", "--config", "bad_q.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`potential`"));

    let out = smdlab(&["sweep", "--potential", "l1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_invariant_writes_failure_record() {
    // far too few steps to recover the sparse signal
    let dir = tempfile::tempdir().unwrap();
    let out = smdlab(&["cs-demo", "--steps", "500", "--out", "cs"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["command"], "cs-demo");
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    assert!(!v["failures"].as_array().unwrap().is_empty());
    let disk: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cs/failure.json")).unwrap()).unwrap();
    assert_eq!(disk, v);
    assert!(dir.path().join("cs/cs_curve.csv").exists());
}

#[test]
fn audit_and_adversary_presets() {
    let dir = tempfile::tempdir().unwrap();
    let out = smdlab(&["audit", "--out", "a"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let v = stdout_json(&out);
    assert!(v["minimax"]["certified"].as_bool().unwrap());
    assert!(dir.path().join("a/identity.csv").exists());

    let out = smdlab(&["adversary", "--out", "adv"], dir.path());
    assert!(out.status.success());
    let r = stdout_json(&out)["ratio"].as_f64().unwrap();
    assert!((r - 1.0).abs() <= 1e-8, "{r}");
}

#[test]
fn project_and_sweep_single_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = smdlab(&["project", "--out", "p"], dir.path());
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["converged"], true);

    let out = smdlab(
        &["sweep", "--potential", "qnorm_squared", "--q", "1.5", "--out", "s"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let cells = stdout_json(&out);
    assert_eq!(cells.as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = smdlab(&["run", "--config", "cfg.toml", "--out", name], &write_cfg(dir.path()));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    }
    let d = dir.path();
    for f in ["trace.csv", "iterates.csv", "identity.csv", "report.json", "manifest.json"] {
        assert_eq!(
            std::fs::read(d.join("a").join(f)).unwrap(),
            std::fs::read(d.join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

fn write_cfg(dir: &Path) -> std::path::PathBuf {
    let text = r#"
name = "rerun"
scenario = "overparam_linear"
seed = 4

[potential]
kind = "negative_entropy"

[loss]
kind = "log_cosh"

[model]
kind = "linear"
dim = 8

[data]
kind = "positive_linear"
n = 3

[schedule]
kind = "constant"
eta = 0.02

[order]
kind = "shuffled"
seed = 9

[stop]
max_steps = 300
residual_tol = 0.0

[init]
kind = "gaussian"
scale = 0.5
seed = 2
"#;
    std::fs::write(dir.join("cfg.toml"), text).unwrap();
    dir.to_path_buf()
}
