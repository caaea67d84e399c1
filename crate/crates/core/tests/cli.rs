use biokernel::verify::{builtin_suite, Check};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_biokernel"));
    c.env_remove("BIOKERNEL_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn csv(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(|x| if x.is_empty() { f64::NAN } else { x.parse().unwrap() }).collect()).collect();
    (header, rows)
}

const GAUSS1: &str =
    r#"{"kind": "additive", "spec": {"W": {"variant": "Gaussian", "params": {"tau": 1.0, "gamma": 0.0}}, "sources": [{"b": 0.0, "mult": 1}]}}"#;

fn shipped_suite() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/gue_suite.json")
}

#[test]
fn shipped_suite_matches_builtin() {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(shipped_suite()).unwrap()).unwrap();
    let checks: Vec<Check> = serde_json::from_value(v["checks"].clone()).unwrap();
    assert_eq!(checks, builtin_suite("gue").unwrap());
}

#[test]
fn verify_shipped_suite() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reports.jsonl");
    let o = run(&["verify", "--config", shipped_suite().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout, std::fs::read_to_string(&out).unwrap());
    let n = stdout
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            assert_eq!(v["passed"], true);
            assert!(v["discrepancy"].as_f64().unwrap() <= v["tolerance"].as_f64().unwrap());
        })
        .count();
    assert_eq!(n, builtin_suite("gue").unwrap().len());
}

#[test]
fn verify_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        format!(r#"{{"checks": [{{"check": "trace", "model": {GAUSS1}, "grid": {{"a": -1.0, "b": 1.0, "panels": 2, "order": 8}}, "tolerance": 1e-6}}]}}"#);
    let p = write(dir.path(), "suite.json", &cfg);
    let o = run(&["verify", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let v: serde_json::Value = serde_json::from_str(String::from_utf8(o.stdout).unwrap().trim()).unwrap();
    assert_eq!(v["passed"], false);
    assert_eq!(run(&["verify", "--suite", "nope"]).status.code(), Some(2));
}

#[test]
fn density_of_one_particle_integrates_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "d.json", &format!(r#"{{"model": {GAUSS1}}}"#));
    let out = dir.path().join("d.csv");
    let o = run(&["density", "--config", p.to_str().unwrap(), "--grid", "-9:9:721", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv(&out);
    assert_eq!(header, "x,kernel_diag,density");
    assert_eq!(rows.len(), 721);
    let integral: f64 = rows.windows(2).map(|w| 0.5 * (w[1][0] - w[0][0]) * (w[0][2] + w[1][2])).sum();
    assert!((integral - 1.0).abs() < 1e-4, "{integral}");
}

#[test]
fn kernel_csv_and_thread_independence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"kind": "additive", "spec": {"W": {"variant": "Gaussian", "params": {"tau": 1.0, "gamma": 0.0}}, "sources": [{"b": 0.3, "mult": 1}, {"b": -0.2, "mult": 1}]}},
                 "x": {"values": [-1.0, 0.0, 0.5]}, "x_prime": {"start": -1.0, "stop": 1.0, "count": 5}}"#;
    let p = write(dir.path(), "k.json", cfg);
    let mut outputs = Vec::new();
    for threads in ["1", "2"] {
        let out = dir.path().join(format!("k{threads}.csv"));
        let o = bin().env("BIOKERNEL_THREADS", threads).args(["kernel", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read_to_string(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let out = dir.path().join("k3.csv");
    assert_eq!(run(&["--threads", "3", "kernel", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(outputs[0], std::fs::read_to_string(&out).unwrap());
    let (header, rows) = csv(&dir.path().join("k1.csv"));
    assert_eq!(header, "x,x_prime,re,im,err_est");
    assert_eq!(rows.len(), 15);
    assert_eq!((rows[5][0], rows[5][1]), (0.0, -1.0));
    // 17 significant digits: d.dddddddddddddddd
    let first = outputs[0].lines().nth(1).unwrap().split(',').nth(2).unwrap().to_string();
    assert_eq!(first.split('e').next().unwrap().trim_start_matches('-').len(), 18);
    let o = bin().env("BIOKERNEL_THREADS", "many").args(["kernel", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k.csv");
    let bad = r#"{"model": {"kind": "additive", "spec": {"W": {"variant": "Gaussian", "params": {"tau": "one", "gamma": 0.0}}, "sources": []}}}"#;
    let p = write(dir.path(), "bad.json", bad);
    let o = run(&["kernel", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("`model`") && err.contains("line 1 column"), "{err}");
    assert!(!out.exists());

    let p = write(dir.path(), "typo.json", &format!("{{\n  \"model\": {GAUSS1},\n  \"grdi\": {{}}\n}}"));
    let o = run(&["density", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("grdi") && err.contains("line 3"), "{err}");

    let p = write(dir.path(), "trunc.json", "{\"model\": ");
    assert_eq!(run(&["kernel", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(), Some(2));
    let p = write(dir.path(), "ok.json", &format!(r#"{{"model": {GAUSS1}}}"#));
    assert_eq!(run(&["kernel", "--config", p.to_str().unwrap(), "--grid", "1:0:5", "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["kernel", "--config", "/nonexistent.json", "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_one() {
    // non-integer ν with r = 0 has no decaying contour at x = 0
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"scan": {"family": "plue", "nu": 0.5, "r": 0.0, "W": {"variant": "Gaussian", "params": {"tau": 0.0, "gamma": 0.0}}, "N_list": [4, 8], "grid": [0.0, 1.0]}}"#;
    let p = write(dir.path(), "p.json", cfg);
    let out = dir.path().join("p.csv");
    let o = run(&["limit", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stderr).unwrap().contains("numeric failure"));
    assert!(!out.exists());
}

#[test]
fn limit_and_sample_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l.csv");
    let o = run(&["limit", "--scan", "plue", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv(&out);
    assert_eq!(header, "N,sup_error,ratio_to_previous");
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![16.0, 32.0, 64.0]);
    assert!(rows[0][2].is_nan() && rows[1][1] < rows[0][1]);

    let p = write(dir.path(), "s.json", r#"{"ensemble": {"kind": "gue", "a": [1.0, -1.0]}}"#);
    let out = dir.path().join("s.csv");
    let o = run(&["sample", "--config", p.to_str().unwrap(), "--count", "20000", "--seed", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(String::from_utf8(o.stdout).unwrap().trim()).unwrap();
    assert_eq!(v["passed"], true);
    let (header, rows) = csv(&out);
    assert_eq!(header, "draw_index,eigenvalue_rank,value");
    assert_eq!(rows.len(), 40_000);

    // tolerance far below the sampling noise
    let p = write(dir.path(), "s2.json", r#"{"ensemble": {"kind": "lue", "N": 2, "nu": 1}, "tolerance": 1e-5}"#);
    let o = run(&["sample", "--config", p.to_str().unwrap(), "--count", "2000", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
