use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gee-precoder"))
}

fn write_spec(dir: &Path, solver: &str, variable: &str, values: &str) -> std::path::PathBuf {
    let path = dir.join("spec.json");
    let text = format!(
        r#"{{
  "base": {{ "k": 2, "d": 1, "sigma2": 1.0, "p_max_dbw": 0.0, "p_cir_dbw": -5.0, "rho": 2.0 }},
  "sweep": {{ "variable": "{variable}", "values": [{values}] }},
  "antennas": [2],
  "trials": 2,
  "seed": 11,
  "solver": "{solver}",
  "output": "{}"
}}"#,
        dir.join("default.csv").display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn check_passes() {
    let out = bin().args(["check"]).output().unwrap();
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.lines().count() >= 8);
    assert!(text.lines().all(|l| l.starts_with("[PASS]")));
}

#[test]
fn check_json_is_parseable() {
    let out = bin().args(["check", "--json", "--seed", "3"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.as_array().unwrap().iter().all(|r| r["passed"] == true));
}

#[test]
fn run_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "statistical", "sigma_delta2", "0.0, 0.1");
    let out = bin().args(["run", "--spec"]).arg(&spec).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("default.csv")).unwrap();
    assert!(csv.starts_with("# schema: gee-precoder-sweep/1"));
    // header + (2 trials + 1 mean) per sweep value
    assert_eq!(csv.lines().count(), 2 + 2 * 3);
}

#[test]
fn overrides_change_output_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "statistical", "sigma_delta2", "0.05");
    let run = |seed: &str, name: &str| {
        let path = dir.path().join(name);
        let out = bin()
            .args(["run", "--threads", "1", "--seed", seed, "--spec"])
            .arg(&spec)
            .arg("--output")
            .arg(&path)
            .output()
            .unwrap();
        assert!(out.status.success());
        std::fs::read_to_string(path).unwrap()
    };
    let a = run("1", "a.csv");
    let b = run("1", "b.csv");
    let c = run("2", "c.csv");
    let gee_column = |s: &str| -> Vec<String> {
        s.lines()
            .skip(2)
            .map(|l| l.split(',').nth(5).unwrap().to_string())
            .collect()
    };
    assert_eq!(gee_column(&a), gee_column(&b));
    assert_ne!(gee_column(&a), gee_column(&c));
    assert!(!dir.path().join("default.csv").exists());
}

#[test]
fn worstcase_solver_runs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "worstcase", "eps", "0.1");
    let out = bin().args(["run", "--spec"]).arg(&spec).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("wrote"));
}

#[test]
fn invalid_spec_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "worstcase", "sigma_delta2", "0.1");
    let out = bin().args(["run", "--spec"]).arg(&spec).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = bin().args(["run", "--spec"]).arg(dir.path().join("missing.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_solver_is_a_usage_error() {
    let out = bin().args(["run", "--spec", "x.json", "--solver", "magic"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
