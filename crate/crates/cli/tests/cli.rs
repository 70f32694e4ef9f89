use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join(format!("../../configs/{name}.json"))
        .display()
        .to_string()
}

fn sbl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbl"))
        .args(args)
        .env_remove("SBL_OUT")
        .output()
        .unwrap()
}

fn out_dir(root: &Path, name: &str) -> (PathBuf, String) {
    let p = root.join(name);
    let s = p.display().to_string();
    (p, s)
}

#[test]
fn sweep_writes_runs_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let (dir, dir_s) = out_dir(tmp.path(), "sweep");
    let out = sbl(&[
        "sweep",
        &config("crossing"),
        "--param",
        "model.coupling",
        "--values",
        "0,0.05,0.1",
        "--seed",
        "8",
        "--out",
        &dir_s,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut reader = csv::Reader::from_path(dir.join("summary.csv")).unwrap();
    let seeds: Vec<u64> = reader
        .records()
        .map(|r| r.unwrap()[2].parse().unwrap())
        .collect();
    assert_eq!(seeds, vec![8, 9, 10]);
    for k in 0..3 {
        assert!(dir.join(format!("run-{k:03}/trajectory.csv")).exists());
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["entries"].as_array().unwrap().len(), 3);
}

#[test]
fn compare_writes_the_comparison_table() {
    let tmp = tempfile::tempdir().unwrap();
    let (dir, dir_s) = out_dir(tmp.path(), "cmp");
    let out = sbl(&["compare", &config("explicit-matrix"), "--out", &dir_s]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut reader = csv::Reader::from_path(dir.join("comparison.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "t",
            "branch",
            "p_exact",
            "p_schmidt",
            "p_diff",
            "fidelity",
            "in_window"
        ]
    );
    assert_eq!(reader.records().count(), 61 * 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("min fidelity"));
}

#[test]
fn schema_error_names_the_path_on_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"name": "x", "model": {"kind": "separable", "dims": [2, 2]},
            "initial": {"kind": "product", "left": 0, "right": 0},
            "time": {"t_max": 1.0, "steps": 1}}"#,
    )
    .unwrap();
    let out = sbl(&[
        "run",
        &bad.display().to_string(),
        "--out",
        &tmp.path().join("o").display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("time.steps"));
    assert!(!tmp.path().join("o").exists());
}
