use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
name = "small"
alpha = 1.0
p_exponent = 2.1
epsilon = 0.05

[law]
kind = "polytropic"
gamma = 2.0
kappa = 0.125

[nonlocal]
lambda = -0.5
interaction = "newtonian_plus_quadratic"

[nonlocal.alignment]
kind = "gaussian"
amplitude = 1.0
width = 1.0

[initial.density]
kind = "gaussian"
mass = 1.0
width = 1.0

[initial.velocity]
kind = "tanh"
amplitude = 0.5
width = 1.0

[grid]
cells = 96

[solver]
t_end = 0.1
snapshots = 2

[entropy]
goursat_resolution = 64
samples = 20
bound_grid = 10
"#;

fn nlcns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlcns"))
        .args(args)
        .env_remove("NLCNS_WORKERS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_verb(verb: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![verb, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    nlcns(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn ladder(list: &str) -> String {
    SMALL.replace("epsilon = 0.05", &format!("ladder = {{ epsilons = [{list}] }}"))
}

#[test]
fn zero_length_run_writes_one_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &SMALL.replace("t_end = 0.1", "t_end = 0.0"));
    let out = dir.path().join("out");
    let o = run_verb("run", &cfg, &out, &["--no-plots"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let snaps: Vec<_> = fs::read_dir(out.join("snapshots")).unwrap().collect();
    assert_eq!(snaps.len(), 1);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["verb"], "run");
    assert_eq!(manifest["pass"], true);
}

#[test]
fn run_writes_series_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let out = dir.path().join("out");
    let o = run_verb("run", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["report.json", "series/energy.csv", "series/boundary.csv", "series/diagnostics.csv", "plots/energy.svg"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let energy = fs::read_to_string(out.join("series/energy.csv")).unwrap();
    assert_eq!(energy.lines().count(), 4);
}

#[test]
fn small_pressure_exponent_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &SMALL.replace("p_exponent = 2.1", "p_exponent = 1.5"));
    for verb in ["run", "validate-config"] {
        let o = run_verb(verb, &cfg, &dir.path().join("out"), &[]);
        assert_eq!(o.status.code(), Some(2));
        assert!(stderr(&o).contains("p>γ/(γ−α)"), "{}", stderr(&o));
    }
}

#[test]
fn validate_config_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let o = run_verb("validate-config", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("is valid"));
    assert!(text.contains("b = "));
    let o = nlcns(&["validate-config", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &SMALL.replace("cells = 96", "cells = 96\ncels = 3"));
    let o = run_verb("validate-config", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn entropy_with_zero_generator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &SMALL.replace("[entropy]", "[entropy]\ngenerator = \"zero\""));
    let out = dir.path().join("out");
    let o = run_verb("entropy", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(&out.join("report.json"));
    assert_eq!(report["zero_pair_max"], 0.0);
    let table = fs::read_to_string(out.join("tables/goursat.csv")).unwrap();
    assert!(table.starts_with("rho,u,eta,q"));
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(run_verb("run", &cfg, out, &["--no-plots"]).status.code(), Some(0));
    }
    for f in ["series/energy.csv", "series/diagnostics.csv", "snapshots/snapshot_0002.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn identical_ladder_members_have_zero_distance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &ladder("0.05, 0.05, 0.05"));
    let out = dir.path().join("out");
    let o = run_verb("sweep", &cfg, &out, &["--no-plots", "--workers", "2"]);
    assert!(o.status.code() == Some(0) || o.status.code() == Some(1), "{}", stderr(&o));
    let report = json(&out.join("report.json"));
    let d = report["ladder"]["distances"].as_array().unwrap();
    assert_eq!(d.len(), 2);
    assert!(d.iter().all(|v| v.as_f64() == Some(0.0)), "{d:?}");
}

#[test]
fn worker_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &ladder("0.08, 0.04, 0.02"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_verb("sweep", &cfg, &a, &["--no-plots", "--workers", "1"]);
    run_verb("sweep", &cfg, &b, &["--no-plots", "--workers", "2"]);
    let (mut ra, mut rb) = (json(&a.join("report.json")), json(&b.join("report.json")));
    for r in [&mut ra, &mut rb] {
        for m in r["members"].as_array_mut().unwrap() {
            m["stats"].as_object_mut().unwrap().remove("wall_seconds");
        }
    }
    assert_eq!(ra["ladder"], rb["ladder"]);
    assert_eq!(ra["members"], rb["members"]);
    assert_eq!(
        fs::read(a.join("series/ladder.csv")).unwrap(),
        fs::read(b.join("series/ladder.csv")).unwrap()
    );
}

#[test]
fn zero_workers_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &ladder("0.08, 0.04, 0.02"));
    let o = run_verb("sweep", &cfg, &dir.path().join("out"), &["--workers", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
