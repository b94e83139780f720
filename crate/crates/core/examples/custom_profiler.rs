// Plug a user-defined profiler into the registry and use it from a config.

use std::collections::BTreeMap;
use std::error::Error;
use std::time::Instant;

use exrunner::design::generate_run_table;
use exrunner::journal::{Journal, JOURNAL_FILE};
use exrunner::model::parse_definition;
use exrunner::orchestrator::{execute, ExecuteOptions};
use exrunner::profilers::{MeasureSet, Profiler, ProfilerError, ProfilerRegistry, RunContext};

/// Wall-clock duration of the measured window, in seconds.
struct Stopwatch {
    name: String,
    metric: String,
    started: Option<Instant>,
}

impl Profiler for Stopwatch {
    fn name(&self) -> &str {
        &self.name
    }

    fn declared_metrics(&self) -> Vec<String> {
        vec![self.metric.clone()]
    }

    fn start(&mut self, _ctx: &RunContext) -> Result<(), ProfilerError> {
        self.started = Some(Instant::now());
        Ok(())
    }

    fn stop(&mut self, _ctx: &RunContext) -> Result<MeasureSet, ProfilerError> {
        let started = self.started.take().ok_or_else(|| ProfilerError::Failed {
            profiler: self.name.clone(),
            message: "stop without start".into(),
        })?;
        Ok(MeasureSet::total(
            &self.metric,
            started.elapsed().as_secs_f64(),
        ))
    }
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let tmp = tempfile::tempdir()?;
    let def = parse_definition(
        &serde_json::json!({
            "name": "sleepers", "gqm": {"goal": "g", "questions": ["q"]},
            "factors": [{"name": "nap", "kind": "main", "treatments": [
                {"name": "short", "params": {"s": "0.05"}}, {"name": "long", "params": {"s": "0.15"}}]}],
            "subjects": [{"name": "sleep", "command": "sleep {s}"}],
            "metrics": [{"name": "duration", "unit": "second"}],
            "repetitions": 2, "cooldown_s": 0, "mode": "automatic", "seed": 9,
            "profilers": [{"name": "clock", "settings": {"kind": "stopwatch", "metric": "duration"}}],
            "output_dir": tmp.path(),
        })
        .to_string(),
    )?;

    let mut registry = ProfilerRegistry::with_builtins();
    registry.register("stopwatch", |config| {
        let settings: &BTreeMap<String, serde_json::Value> = &config.settings;
        let metric = settings
            .get("metric")
            .and_then(|v| v.as_str())
            .unwrap_or("duration")
            .to_string();
        Ok(Box::new(Stopwatch {
            name: config.name.clone(),
            metric,
            started: None,
        }))
    });

    let mut table = generate_run_table(&def)?;
    let mut journal = Journal::open(def.output_dir.join(JOURNAL_FILE))?;
    let mut profilers = registry.build_all(&def)?;
    execute(
        &def,
        &mut table,
        &mut journal,
        &mut profilers,
        ExecuteOptions::default(),
    )?;
    for run in &table.runs {
        println!("{:<16} {:.3} s", run.run_id, run.measures["duration"]);
    }
    Ok(())
}

fn main() {
    run_example().unwrap();
}
