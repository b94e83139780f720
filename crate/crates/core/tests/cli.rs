use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::json;

fn exr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exr"))
        .args(args)
        .current_dir(dir)
        .stdin(Stdio::null())
        .output()
        .expect("exr spawns")
}

fn write_config(dir: &Path, repetitions: u32, hooks: serde_json::Value) {
    let config = json!({
        "name": "cli",
        "gqm": {"goal": "g", "questions": ["q"]},
        "factors": [{"name": "f", "kind": "main", "treatments": [{"name": "a"}, {"name": "b"}]}],
        "subjects": [{"name": "s", "command": "true"}],
        "metrics": [{"name": "energy", "unit": "joule"}],
        "repetitions": repetitions,
        "cooldown_s": 60,
        "estimated_run_time_s": 300,
        "profilers": [{"name": "synthetic", "settings": {"power_w": 1}}],
        "hooks": hooks,
        "output_dir": dir.join("data"),
    });
    std::fs::write(dir.join("experiment.json"), config.to_string()).unwrap();
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(exr(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(exr(tmp.path(), &["plan", "missing.json"]).status.code(), Some(1));
    assert_eq!(exr(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn over_budget_plan_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), 500, json!({}));
    let out = exr(tmp.path(), &["plan", "experiment.json"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_hook_exits_three_and_status_reports_abort() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), 1, json!({"before_run": tmp.path().join("nope.sh")}));
    assert_eq!(exr(tmp.path(), &["run", "experiment.json"]).status.code(), Some(3));
    let out = exr(tmp.path(), &["status", "data"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("phase: aborted"), "{text}");
    assert!(text.contains("pending: 2"), "{text}");
}

#[test]
fn report_without_completed_runs_fails() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), 2, json!({}));
    assert!(exr(tmp.path(), &["plan", "experiment.json"]).status.success());
    let out = exr(tmp.path(), &["report", "data"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!tmp.path().join("data/report.md").exists());
}
