// Wrap a meter CLI that prints `metric,value` lines, and observe the run
// lifecycle from hook scripts.

use std::error::Error;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;

use exrunner::design::generate_run_table;
use exrunner::journal::{Journal, JOURNAL_FILE};
use exrunner::model::parse_definition;
use exrunner::orchestrator::{execute, ExecuteOptions};
use exrunner::profilers::ProfilerRegistry;

fn script(path: &Path, body: &str) -> std::io::Result<()> {
    std::fs::write(path, format!("#!/bin/sh\n{body}\n"))?;
    std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o755))
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let tmp = tempfile::tempdir()?;
    let dir = tmp.path();
    // a stand-in for a vendor meter: reports until stopped
    script(
        &dir.join("meter.sh"),
        "trap 'echo watt_hours,0.001; exit 0' TERM\nwhile true; do echo watts,4.5; sleep 0.02; done",
    )?;
    let events = dir.join("events.log");
    let hook_body = format!(
        "echo \"$EXR_EVENT ${{EXR_RUN_ID:-}} ${{EXR_TREATMENT_COMPRESSION:-}}\" >> {}",
        events.display()
    );
    for event in [
        "before_experiment",
        "before_run",
        "after_run",
        "after_experiment",
    ] {
        script(&dir.join(format!("{event}.sh")), &hook_body)?;
    }

    let def = parse_definition(
        &serde_json::json!({
            "name": "meter", "gqm": {"goal": "g", "questions": ["q"]},
            "factors": [{"name": "compression", "kind": "main",
                         "treatments": [{"name": "gzip"}, {"name": "zstd"}]}],
            "subjects": [{"name": "job", "command": "sleep 0.1"}],
            "metrics": [{"name": "power", "unit": "watt"}, {"name": "wh", "unit": {"custom": "Wh"}}],
            "repetitions": 1, "cooldown_s": 0, "mode": "automatic", "seed": 1,
            "profilers": [{"name": "wattsup", "settings": {
                "kind": "external", "command": dir.join("meter.sh").display().to_string(),
                "map": {"watts": "power", "watt_hours": "wh"}}}],
            "hooks": {
                "before_experiment": dir.join("before_experiment.sh"),
                "before_run": dir.join("before_run.sh"),
                "after_run": dir.join("after_run.sh"),
                "after_experiment": dir.join("after_experiment.sh")},
            "output_dir": dir.join("out"),
        })
        .to_string(),
    )?;

    let mut table = generate_run_table(&def)?;
    let mut journal = Journal::open(def.output_dir.join(JOURNAL_FILE))?;
    let mut profilers = ProfilerRegistry::with_builtins().build_all(&def)?;
    execute(
        &def,
        &mut table,
        &mut journal,
        &mut profilers,
        ExecuteOptions::default(),
    )?;
    for run in &table.runs {
        println!("{} {:?}", run.run_id, run.measures);
    }
    print!("{}", std::fs::read_to_string(events)?);
    Ok(())
}

fn main() {
    run_example().unwrap();
}
