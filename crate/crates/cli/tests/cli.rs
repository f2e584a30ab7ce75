use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uav-insar"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn run_writes_outputs_and_audit_accepts_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = config("table_i.toml");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    for f in ["combined.csv", "proposed.csv", "bench1.csv", "bench2.csv", "bench3.csv", "results.json", "metadata.json", "trace_proposed.jsonl"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let a = run(&["audit", out]);
    assert_eq!(a.status.code(), Some(0), "{}", text(&a));
    assert!(String::from_utf8_lossy(&a.stdout).contains("audit=pass"));
}

#[test]
fn sweep_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["sweep", "--schemes", "proposed,bench1", "--sweep", "h_amb_min_m=0.6:1.2:0.3", "--out", d.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    }
    let x = std::fs::read(a.path().join("combined.csv")).unwrap();
    let y = std::fs::read(b.path().join("combined.csv")).unwrap();
    assert_eq!(x, y);
    assert_eq!(String::from_utf8_lossy(&x).lines().count(), 1 + 3 * 2);
}

#[test]
fn all_infeasible_exits_with_two() {
    let o = run(&["sweep", "--schemes", "bench3", "--sweep", "rate_floor_1_bps=17.25e6:17.5e6:0.25e6", "--config", config("rate_sweep.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn bad_inputs_exit_with_one() {
    let o = run(&["sweep", "--sweep", "no_such_key=1:2:1"]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("no_such_key"));

    let o = run(&["run", "--config", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(1));

    let empty = tempfile::tempdir().unwrap();
    let o = run(&["audit", empty.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_scheme_is_a_usage_error() {
    let o = run(&["run", "--schemes", "bench9"]);
    assert!(!o.status.success());
}

#[test]
fn validate_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate", "--seed", "3", "--grid-oracle", "2.0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 3);
    assert_eq!(v["phase"].as_array().unwrap().len(), 4);
    assert!(v["grid"]["best"].is_array());
}
