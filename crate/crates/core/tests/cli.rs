use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tilecocycle::cli::output::Manifest;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str], out: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tilecocycle"));
    cmd.args(args).arg("--out").arg(out).env_remove("TILECOCYCLE_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn config(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn manifest(dir: &Path) -> Manifest {
    let m: Manifest = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    m.verify(dir).unwrap();
    m
}

#[test]
fn twist_writes_one_row_per_parameter_and_radius() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["twist", "--config", &config("tmpd.json"), "--workers", "2"], dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(dir.path().join("twist.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "lambda_1,R,re,im,abs,method,seed");
    assert_eq!(lines.count(), 64 * 13);
    let fits: Value = serde_json::from_slice(&fs::read(dir.path().join("twist-fits.json")).unwrap()).unwrap();
    assert_eq!(fits["fits"].as_array().unwrap().len(), 64);
    let m = manifest(dir.path());
    assert_eq!(m.command, "twist");
    assert_eq!(m.status, "ok");
    assert_eq!(m.workers, 2);
    assert_eq!(m.seed, Some(1));
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("tmpd.json");
    for (dir, w) in [(a.path(), "1"), (b.path(), "3")] {
        for cmd in ["twist", "veech", "decompose"] {
            assert!(run(&[cmd, "--config", &cfg, "--seed", "5"], dir, &[("TILECOCYCLE_WORKERS", w)]).status.success());
        }
    }
    let ma = manifest(a.path());
    let mb = manifest(b.path());
    assert_eq!((ma.workers, mb.workers), (1, 3));
    for o in &ma.outputs {
        assert_eq!(fs::read(a.path().join(&o.file)).unwrap(), fs::read(b.path().join(&o.file)).unwrap(), "{}", o.file);
    }
    for f in ["twist.csv", "twist-fits.json", "veech-000.csv", "veech.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_changes_the_draws() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("tmpd.json");
    run(&["twist", "--config", &cfg, "--seed", "2"], a.path(), &[]);
    run(&["twist", "--config", &cfg, "--seed", "3"], b.path(), &[]);
    assert_ne!(fs::read(a.path().join("twist.csv")).unwrap(), fs::read(b.path().join("twist.csv")).unwrap());
    assert_eq!(manifest(a.path()).sampler_seed, Some(2));
}

#[test]
fn broken_covering_names_rule_and_parent() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["validate", "--config", &config("broken-covering.json")], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err["error"], "validation");
    let covering = err["details"].as_array().unwrap().iter().find(|d| d["check"] == "covering").unwrap();
    let detail = covering["detail"].as_str().unwrap();
    assert!(detail.contains("rule lonely") && detail.contains("parent a"), "{detail}");
    let written: Value = serde_json::from_slice(&fs::read(dir.path().join("error.json")).unwrap()).unwrap();
    assert_eq!(written, err);
    assert_eq!(manifest(dir.path()).status, "error");
}

#[test]
fn bundled_configs_validate() {
    for name in ["tmpd.json", "fibonacci.json", "block2d.json"] {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&["validate", "--config", &config(name)], dir.path(), &[]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stdout));
        let v: Value = serde_json::from_slice(&fs::read(dir.path().join("validate.json")).unwrap()).unwrap();
        assert!(v["report"]["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    }
}

#[test]
fn schema_errors_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(configs().join("tmpd.json")).unwrap()).unwrap();
    v["sampler"]["p"] = serde_json::json!([0.5, 0.6]);
    v.as_object_mut().unwrap().remove("seed");
    fs::write(&cfg, v.to_string()).unwrap();
    let out = run(&["twist", "--config", cfg.to_str().unwrap()], &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err["error"], "config");
    let msgs: Vec<String> = err["details"].as_array().unwrap().iter().map(|d| d.to_string()).collect();
    assert!(msgs.iter().any(|m| m.contains("/seed")), "{msgs:?}");
    assert!(msgs.iter().any(|m| m.contains("probabilities sum 1.1")), "{msgs:?}");
}

#[test]
fn missing_config_and_bad_usage_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["twist", "--config", "/nonexistent/x.json"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(serde_json::from_slice::<Value>(&out.stdout).unwrap()["error"], "io");
    let out = run(&["unknown", "--config", "x"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(serde_json::from_slice::<Value>(&out.stdout).unwrap()["error"], "usage");
}

#[test]
fn exponents_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fib.json");
    let text = fs::read_to_string(configs().join("fibonacci.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["experiment"]["n_steps"] = 2000.into();
    fs::write(&cfg, v.to_string()).unwrap();
    let out = run(&["exponents", "--config", cfg.to_str().unwrap()], &dir.path().join("o"), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let recs: Vec<Value> = serde_json::from_slice(&fs::read(dir.path().join("o/exponents.json")).unwrap()).unwrap();
    let phi = ((1.0 + 5f64.sqrt()) / 2.0).ln();
    let get = |n: &str| recs.iter().find(|r| r["name"] == n).unwrap()["value"].as_f64().unwrap();
    assert!((get("trace") - phi).abs() < 1e-3);
    assert!((get("G_1") - phi).abs() < 1e-3 && (get("G_2") + phi).abs() < 1e-3);
    assert!(recs.iter().all(|r| r["n"] == 2000 && r["stderr"].is_number()));
}

#[test]
fn veech_and_deform_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("tmpd.json");
    assert!(run(&["veech", "--config", &cfg], dir.path(), &[]).status.success());
    let csv = fs::read_to_string(dir.path().join("veech-000.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "j,k_j,dist,indicator,D_N");
    assert!(csv.lines().count() > 10);
    let out = run(&["deform", "--config", &cfg], dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let d: Value = serde_json::from_slice(&fs::read(dir.path().join("deform.json")).unwrap()).unwrap();
    assert_eq!(d["combinatorics_identical"], true);
    assert_eq!(d["veech"]["agree"], true);
    assert_eq!(d["cycle"]["invertible"], true);
}

#[test]
fn spectral_bound_and_decompose_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(configs().join("tmpd.json")).unwrap()).unwrap();
    v["experiment"]["lambdas"] = serde_json::json!([[0.3]]);
    v["experiment"]["samples"] = 16.into();
    fs::write(&cfg, v.to_string()).unwrap();
    let c = cfg.to_str().unwrap();
    assert!(run(&["spectral-bound", "--config", c], dir.path(), &[]).status.success());
    let sb = fs::read_to_string(dir.path().join("spectral-bound.csv")).unwrap();
    assert!(sb.starts_with("lambda_1,r,R,kernel_constant,l2_estimate,l2_stderr,samples,retries,bound\n"));
    assert_eq!(sb.lines().count(), 1 + 6);
    assert!(run(&["decompose", "--config", c], dir.path(), &[]).status.success());
    let dc = fs::read_to_string(dir.path().join("decompose.csv")).unwrap();
    assert!(dc.lines().skip(1).all(|l| l.split(',').nth(6) == Some("true")));
}
