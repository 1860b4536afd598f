use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cox-invariance");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .env_remove("COX_INVARIANCE_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn simulate_reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["simulate", "--t", "0.5", "--replicates", "20", "--seed", "9"];
    assert!(run(&a, &args).status.success());
    assert!(run(&b, &args).status.success());
    for f in ["atoms.csv", "summary.csv", "config.json"] {
        assert_eq!(read(&a, f), read(&b, f), "{f} differs");
    }
    let atoms = read(&a, "atoms.csv");
    assert!(atoms.starts_with("# cox-invariance "));
    assert!(atoms.contains("# config_sha256 "));
    assert!(atoms.contains("# seed 9"));
}

#[test]
fn echoed_config_reproduces_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&a, &["simulate", "--t", "1", "--replicates", "5"]).status.success());
    let cfg = a.join("config.json");
    let out = run(&b, &["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&a, "atoms.csv"), read(&b, "atoms.csv"));
}

#[test]
fn different_seeds_differ() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&a, &["simulate", "--replicates", "5", "--seed", "1"]);
    run(&b, &["simulate", "--replicates", "5", "--seed", "2"]);
    assert_ne!(read(&a, "atoms.csv"), read(&b, "atoms.csv"));
}

#[test]
fn invalid_input_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["simulate", "--t", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(tmp.path(), &["simulate", "--Z", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(tmp.path(), &["simulate", "--window", "1", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(tmp.path(), &["simulate", "--epsilon", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_2_with_position() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, "{\n  \"model\": 5\n}\n").unwrap();
    let out = run(tmp.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn narrow_padding_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    assert!(run(&a, &["simulate", "--t", "1", "--replicates", "1"]).status.success());
    let text = read(&a, "config.json");
    let mut echo: serde_json::Value = serde_json::from_str(&text).unwrap();
    echo["config"]["padded_window"] = serde_json::json!([-3.5, 3.5]);
    let cfg = tmp.path().join("narrow.json");
    fs::write(&cfg, echo.to_string()).unwrap();
    let out = run(&tmp.path().join("b"), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn zero_intensity_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["simulate", "--Z", "0", "--Y", "0", "--replicates", "3"]);
    assert!(out.status.success());
    let atoms = read(tmp.path(), "atoms.csv");
    assert!(atoms.lines().filter(|l| !l.starts_with('#')).count() <= 1);
}

#[test]
fn oracle_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["oracle-check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(read(tmp.path(), "oracle.csv").contains("PASS"));
}

#[test]
fn verify_small_run_writes_outcomes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(
        tmp.path(),
        &["verify", "--t", "0.5", "--replicates", "300", "--control", "wrong-exponent", "--seed", "4"],
    );
    assert!(matches!(out.status.code(), Some(0) | Some(1)));
    let csv = read(tmp.path(), "outcomes.csv");
    assert!(csv.contains("fixed_point:"));
    assert!(csv.contains("wrong-exponent:"));
}

#[test]
fn unknown_control_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["verify", "--control", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
}
