use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BASE: &str = r#"
[domain]
extents = [1.0]
nodes = [31]

[problem]
lambda = 5.0
q = 0.5
t_max = 0.05
f = "exp"
sigma = { kind = "linear", c = 0.2 }

[noise]
kind = "kl"
eps_tail = 1e-6
kernel = { form = "gaussian", amplitude = 1.0, length = 0.1 }

[stepper]
dt0 = 1e-4

[ensemble]
n_paths = 6
master_seed = 9
checkpoints = 5
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn nlspde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlspde")).args(args).output().unwrap()
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    nlspde(&args)
}

fn run_dir(out: &Path) -> PathBuf {
    let mut dirs: Vec<PathBuf> = fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&o.stderr)))
}

#[test]
fn eigen_writes_lambda1_for_the_unit_interval() {
    let tmp = tempfile::tempdir().unwrap();
    let text = BASE.replace("nodes = [31]", "nodes = [255]");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    let o = run("eigen", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(&out);
    let mut reader = csv::Reader::from_path(dir.join("eigen.csv")).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["x", "phi1", "lambda1"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 255);
    let lambda1: f64 = rows[0][2].parse().unwrap();
    assert!((lambda1 - 9.8696).abs() < 1e-2, "{lambda1}");
    assert!(dir.join("spectrum.csv").exists());
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "eigen");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["run_id"].as_str().unwrap(), dir.file_name().unwrap().to_str().unwrap());
}

#[test]
fn negative_q_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &BASE.replace("q = 0.5", "q = -1.0"));
    let o = run("ensemble", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["kind"], "config");
    assert_eq!(e["error"]["key"], "problem.q");
    assert!(e["error"]["message"].as_str().unwrap().contains("q must be > 0"));
}

#[test]
fn unknown_nonlinearity_lists_the_registry() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &BASE.replace("f = \"exp\"", "f = \"exp2\""));
    let o = run("eigen", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["key"], "problem.f");
    let msg = e["error"]["message"].as_str().unwrap();
    for name in ["exp", "shifted_power", "constant_plus", "tabulated"] {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn unknown_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &BASE.replace("dt0 = 1e-4", "dt_0 = 1e-4"));
    let o = run("eigen", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_json(&o)["error"]["message"].as_str().unwrap().contains("dt_0"));
}

#[test]
fn bounds_report_b_for_exp_half() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{BASE}\n[bounds]\npsi0 = 0\n");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    let o = run("bounds", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(&out);
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.join("bounds.json")).unwrap()).unwrap();
    let b = report["b"].as_f64().unwrap();
    assert!((b - 2.0 / std::f64::consts::E).abs() < 1e-4, "{b}");
    assert!((b - 0.7358).abs() < 1e-4);
    assert!(dir.join("growth.json").exists());
}

#[test]
fn ensemble_output_is_byte_identical_across_runs_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "1", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        let o = run("ensemble", &cfg, &out, &["--workers", workers]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let dir = run_dir(&out);
        let name = dir.file_name().unwrap().to_owned();
        outputs.push((
            name,
            fs::read(dir.join("stats.csv")).unwrap(),
            fs::read(dir.join("paths.jsonl")).unwrap(),
            fs::read(dir.join("manifest.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let jsonl = String::from_utf8(outputs[0].2.clone()).unwrap();
    assert_eq!(jsonl.lines().count(), 6);
}

#[test]
fn seed_override_changes_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run("sim", &cfg, &a, &[]).status.success());
    assert!(run("sim", &cfg, &b, &["--seed", "10"]).status.success());
    let (da, db) = (run_dir(&a), run_dir(&b));
    assert_ne!(da.file_name(), db.file_name());
    let ra = fs::read_to_string(da.join("paths.jsonl")).unwrap();
    let rb = fs::read_to_string(db.join("paths.jsonl")).unwrap();
    assert_eq!(ra.lines().count(), 1);
    assert_ne!(ra, rb);
}

#[test]
fn verify_passes_and_fails_with_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = format!("{BASE}\n[verify]\nchecks = [\"hopf_sign\", \"comparison_positivity\", \"boundary_ratio\"]\nn_pairs = 2\n");
    let cfg = write_config(tmp.path(), &ok);
    let out = tmp.path().join("ok");
    let o = run("verify", &cfg, &out, &[]);
    assert!(o.status.success(), "{}\n{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    let checks: Value = serde_json::from_str(&fs::read_to_string(run_dir(&out).join("checks.json")).unwrap()).unwrap();
    assert_eq!(checks.as_array().unwrap().len(), 3);

    let bad = format!("{BASE}\n[verify]\nchecks = [\"hopf_sign\"]\ntol_h = 1e9\n");
    let cfg = write_config(tmp.path(), &bad);
    let o = run("verify", &cfg, &tmp.path().join("bad"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["kind"], "checks_failed");
    assert_eq!(e["error"]["checks"][0], "hopf_sign");
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}
