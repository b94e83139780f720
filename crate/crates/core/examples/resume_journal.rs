// Pause an experiment midway, resume it from its journal, and recover from
// a torn final line.

use std::error::Error;
use std::io::Write;
use std::sync::Arc;

use exrunner::design::generate_run_table;
use exrunner::journal::{read_records, Journal, JOURNAL_FILE};
use exrunner::model::parse_definition;
use exrunner::orchestrator::{execute, Control, ExecuteOptions};
use exrunner::profilers::ProfilerRegistry;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let tmp = tempfile::tempdir()?;
    let def = parse_definition(
        &serde_json::json!({
            "name": "resume", "gqm": {"goal": "g", "questions": ["q"]},
            "factors": [{"name": "f", "kind": "main", "treatments": [{"name": "a"}, {"name": "b"}]}],
            "subjects": [{"name": "s", "command": "true"}],
            "metrics": [{"name": "energy", "unit": "joule"}],
            "repetitions": 3, "cooldown_s": 0, "mode": "automatic", "seed": 4,
            "profilers": [{"name": "synthetic", "settings": {"power_w": 5}}],
            "output_dir": tmp.path(),
        })
        .to_string(),
    )?;
    let journal_path = def.output_dir.join(JOURNAL_FILE);
    let registry = ProfilerRegistry::with_builtins();

    // first session: pause after the second run, as an interrupt would
    let control = Arc::new(Control::new());
    let c = control.clone();
    let options = ExecuteOptions {
        control,
        progress: Some(Box::new(move |state, _| {
            if state.completed_count == 2 {
                c.request_pause();
            }
        })),
        ..Default::default()
    };
    let mut table = generate_run_table(&def)?;
    let mut journal = Journal::open(&journal_path)?;
    let first = execute(
        &def,
        &mut table,
        &mut journal,
        &mut registry.build_all(&def)?,
        options,
    )?;
    println!(
        "first session: {} after {} runs",
        first.state.phase, first.state.completed_count
    );
    drop(journal);

    // a crash mid-write leaves half a line behind
    std::fs::OpenOptions::new()
        .append(true)
        .open(&journal_path)?
        .write_all(br#"{"crc":123,"record":{"seq"#)?;

    let mut table = generate_run_table(&def)?;
    let mut journal = Journal::open(&journal_path)?;
    println!("reopened journal holds {} records", journal.records().len());
    let second = execute(
        &def,
        &mut table,
        &mut journal,
        &mut registry.build_all(&def)?,
        ExecuteOptions::default(),
    )?;
    println!(
        "second session: {} with {} runs",
        second.state.phase, second.state.completed_count
    );
    for r in read_records(&journal_path)? {
        println!("  #{} {} {:?}", r.sequence_no, r.run_id, r.status);
    }
    assert_eq!(read_records(&journal_path)?.len(), 6);
    Ok(())
}

fn main() {
    run_example().unwrap();
}
