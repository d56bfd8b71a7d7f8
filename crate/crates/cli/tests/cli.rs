use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn oros(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oros")).args(args).output().expect("run oros")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_tiny_writes_plan_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = scenario("tiny_3x3.json");
    let out = oros(&["solve", tiny.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stats = read_json(&dir.path().join("stats.json"));
    assert_eq!(stats["status"], "optimal");
    let plan = read_json(&dir.path().join("plan.json"));
    assert!(!plan["robots"].as_array().unwrap().is_empty());
}

#[test]
fn time_limit_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let field = scenario("field_test_13x9.json");
    let out = oros(&[
        "solve",
        field.to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
        "--set",
        "solver.time_limit_s=0.001",
        "--set",
        "solver.node_limit=null",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("stats.json").exists());
}

#[test]
fn missing_scenario_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = oros(&["solve", "missing.json", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing.json"), "{err}");
}

#[test]
fn bad_override_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = scenario("tiny_3x3.json");
    let out = oros(&["solve", tiny.to_str().unwrap(), "-o", dir.path().to_str().unwrap(), "--set", "planner.window_w"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn profile_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = oros(&["profile", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("hours_on,"));
    assert_eq!(lines.count(), 11);
    assert!(dir.path().join("devices.json").exists());
}

#[test]
fn dump_model_writes_lp() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = scenario("tiny_3x3.json");
    let out = oros(&["dump-model", tiny.to_str().unwrap(), "--window", "2", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let lp = std::fs::read_to_string(dir.path().join("model.lp")).unwrap();
    assert!(lp.contains("Subject To") || lp.contains("subject to"), "{lp}");
}

#[test]
fn mission_is_deterministic() {
    let tiny = scenario("tiny_3x3.json");
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = oros(&["mission", tiny.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let report = read_json(&dir.path().join("report.json"));
        assert!(dir.path().join("plan.json").exists());
        (std::fs::read_to_string(dir.path().join("trace.csv")).unwrap(), report)
    };
    let (a, report) = run();
    let (b, _) = run();
    assert_eq!(a, b);
    assert!(a.starts_with("t,robot,a,b,battery,sensors_on,charging,event"));
    assert!(report.to_string().contains("coverage"));
}

#[test]
fn compare_without_revisits_or_local_cost_saves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = scenario("tiny_3x3.json");
    let out = oros(&[
        "compare",
        tiny.to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
        "--set",
        "energy.p_local=0",
        "--json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("report.json"));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let revisits = trace.lines().skip(1).filter(|l| {
        let f: Vec<&str> = l.split(',').collect();
        f[0] != "0" && f[5] == "0"
    });
    assert_eq!(revisits.count(), 0);
    assert!(report["savings"].as_f64().unwrap().abs() < 1e-12, "{report}");
    for f in ["report.csv", "soa_trace.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn seed_sweep_writes_one_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = scenario("tiny_3x3.json");
    let out = oros(&[
        "compare",
        tiny.to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
        "--hidden-obstacles",
        "1",
        "--seeds",
        "3",
        "--jobs",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dirs = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("seed_"))
        .count();
    assert_eq!(dirs, 3);
    assert!(dir.path().join("report.json").exists());
}
