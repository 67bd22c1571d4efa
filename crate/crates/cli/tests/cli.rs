use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ldsplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldsplan")).args(args).output().unwrap()
}

fn shipped_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn validates_shipped_config() {
    let out = ldsplan(&["validate", "-c", shipped_config().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok: "));
}

#[test]
fn validates_defaults_without_file() {
    assert!(ldsplan(&["validate"]).status.success());
}

#[test]
fn out_of_range_lambda_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "lambda = 1.2\n");
    assert_eq!(ldsplan(&["validate", "-c", cfg.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn malformed_toml_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "lambda = \n");
    let out = ldsplan(&["validate", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_config_is_an_io_error() {
    assert_eq!(ldsplan(&["validate", "-c", "/nonexistent/cfg.toml"]).status.code(), Some(5));
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    assert_eq!(ldsplan(&[]).status.code(), Some(2));
}

#[test]
fn eval_requires_policy_or_conops() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    assert_eq!(ldsplan(&["eval", "-o", out.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn conops_eval_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[evaluation]\nrollouts = 50\nhorizon = 100\n");
    let out = dir.path().join("m.csv");
    let events = dir.path().join("e.csv");
    let o = ldsplan(&[
        "eval",
        "-c",
        cfg.to_str().unwrap(),
        "--conops",
        "0.95",
        "0.05",
        "-o",
        out.to_str().unwrap(),
        "--events",
        events.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("policy_id,"));
    assert_eq!(lines.count(), 1);
    assert!(std::fs::read_to_string(&events).unwrap().starts_with("rollout,step,declared,truth,belief,instruments"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"].as_u64(), Some(20250101));
}

#[test]
fn conops_thresholds_out_of_range_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let o = ldsplan(&["eval", "--conops", "0.5", "0.05", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn policy_from_other_model_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", "lambda = 0.72\n");
    let other = write(dir.path(), "b.toml", "lambda = 0.9\n[evaluation]\nrollouts = 10\n");
    let policy = dir.path().join("a.policy");
    let o = ldsplan(&["solve", "-c", cfg.to_str().unwrap(), "-o", policy.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("a.policy.manifest.json").exists());

    let out = dir.path().join("m.csv");
    let o = ldsplan(&[
        "eval",
        "-c",
        other.to_str().unwrap(),
        "--policy",
        policy.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(6));

    let map = dir.path().join("map.csv");
    let o = ldsplan(&[
        "policy-map",
        "-c",
        cfg.to_str().unwrap(),
        "--policy",
        policy.to_str().unwrap(),
        "--belief-step",
        "0.1",
        "-o",
        map.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    // 11 belief columns by 101 volumes, plus a header
    assert_eq!(std::fs::read_to_string(&map).unwrap().lines().count(), 11 * 101 + 1);
}

#[test]
fn garbage_policy_file_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let policy = write(dir.path(), "junk.policy", "not a policy\n");
    let out = dir.path().join("m.csv");
    let o = ldsplan(&["eval", "--policy", policy.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(6));
}

#[test]
fn tiny_timeout_exits_with_timeout_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.toml", "[solver]\ntimeout_secs = 0.05\nprecision = 1e-12\n");
    let policy = dir.path().join("t.policy");
    let o = ldsplan(&["solve", "-c", cfg.to_str().unwrap(), "-o", policy.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(dir.path().join("t.policy.manifest.json").exists());
}

#[test]
fn bad_lambda_grid_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let o = ldsplan(&["sweep", "--lambda", "0.9:0.7:0.1", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}
