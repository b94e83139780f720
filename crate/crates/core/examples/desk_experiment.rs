// A complete desk-scale experiment: two treatments, two subjects, three
// repetitions, a synthetic meter, then the hypothesis test.

use std::error::Error;

use exrunner::design::generate_run_table;
use exrunner::journal::{Journal, JOURNAL_FILE};
use exrunner::model::{parse_definition, validate};
use exrunner::orchestrator::{execute, ExecuteOptions};
use exrunner::profilers::ProfilerRegistry;
use exrunner::stats::analyze;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let tmp = tempfile::tempdir()?;
    let config = serde_json::json!({
        "name": "sorting",
        "gqm": {"goal": "Compare the energy of two sorting implementations",
                "questions": ["RQ1: Which implementation uses less energy?"]},
        "factors": [{"name": "impl", "kind": "main", "treatments": [
            {"name": "quick", "params": {"watts": "10"}},
            {"name": "merge", "params": {"watts": "20"}}]}],
        "subjects": [
            {"name": "small", "command": "echo sorting 1e3 with {watts} W"},
            {"name": "large", "command": "echo sorting 1e6 with {watts} W"}],
        "metrics": [{"name": "energy", "unit": "joule"}],
        "hypotheses": [{"id": "H1", "metric": "energy", "factor": "impl",
                        "treatment_a": "quick", "treatment_b": "merge", "direction": "a_less"}],
        "repetitions": 3, "cooldown_s": 0, "mode": "automatic", "seed": 11,
        "profilers": [{"name": "meter", "settings": {
            "kind": "synthetic", "power_w": "{watts}", "duration_s": 1, "jitter": 0.02}}],
        "output_dir": tmp.path().join("data"),
    });
    let def = parse_definition(&config.to_string())?;
    assert!(validate(&def).is_ok());

    let mut table = generate_run_table(&def)?;
    let mut journal = Journal::open(def.output_dir.join(JOURNAL_FILE))?;
    let mut profilers = ProfilerRegistry::with_builtins().build_all(&def)?;
    let result = execute(
        &def,
        &mut table,
        &mut journal,
        &mut profilers,
        ExecuteOptions::default(),
    )?;
    println!(
        "{}: {} runs done",
        result.state.phase, result.state.completed_count
    );
    print!("{}", result.csv);

    let report = analyze(&def, &table)?;
    println!("{}", report.to_markdown());
    let h1 = report.hypothesis("H1").expect("H1 analyzed");
    assert_eq!(h1.cliffs_delta.value, -1.0);
    Ok(())
}

fn main() {
    run_example().unwrap();
}
