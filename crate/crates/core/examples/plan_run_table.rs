// Expand a three-benchmark, two-factor design into a shuffled run table,
// keep half of its trials, and check the duration against the budget.
//
// ```sh
// cargo run --example plan_run_table
// ```

use std::error::Error;
use std::time::Duration;

use exrunner::design::{
    apply_fraction, check_feasibility, estimate_duration, generate_run_table, Fraction, PlanSummary,
};
use exrunner::model::{parse_definition, validate};

const CONFIG: &str = r#"{
  "name": "wasm-runtimes",
  "gqm": {"goal": "Compare the energy use of languages compiled to WebAssembly",
          "questions": ["RQ1: Does the source language affect energy?"]},
  "factors": [
    {"name": "language", "kind": "main", "treatments": [
      {"name": "c", "params": {"lang": "c"}}, {"name": "rust", "params": {"lang": "rust"}},
      {"name": "go", "params": {"lang": "go"}}, {"name": "js", "params": {"lang": "js"}}]},
    {"name": "runtime", "kind": "co_factor", "treatments": [
      {"name": "browser", "params": {"rt": "browser"}}, {"name": "wasmer", "params": {"rt": "wasmer"}}]},
    {"name": "device", "kind": "fixed", "treatments": [{"name": "laptop"}]}
  ],
  "subjects": [
    {"name": "nbody", "command": "./bench nbody {lang} {rt}"},
    {"name": "fannkuch", "command": "./bench fannkuch {lang} {rt}"},
    {"name": "spectral", "command": "./bench spectral {lang} {rt}"}
  ],
  "metrics": [{"name": "energy", "unit": "joule"}],
  "repetitions": 10, "cooldown_s": 60, "estimated_run_time_s": 300,
  "mode": "automatic", "seed": 2023
}"#;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let def = parse_definition(CONFIG)?;
    let report = validate(&def);
    assert!(report.is_ok(), "{report}");

    let table = generate_run_table(&def)?;
    println!("{}", PlanSummary::new(&def, &table));
    println!("order digest {}", table.order_digest);
    for run in table.runs.iter().take(5) {
        println!(
            "  {:<28} rep {}  {}",
            run.run_id, run.repetition, run.trial_key
        );
    }
    assert_eq!((table.len(), table.trial_keys().len()), (240, 24));

    let half = apply_fraction(&def, &table, "1/2".parse::<Fraction>()?, def.seed);
    println!(
        "half fraction: {} runs over {} trials",
        half.len(),
        half.trial_keys().len()
    );

    let per_run = Duration::from_secs(300);
    let cooldown = Duration::from_secs(60);
    for runs in [240, 1000] {
        let total = estimate_duration(runs, per_run, cooldown);
        let verdict = check_feasibility(total, def.budget());
        println!("{runs} runs: {} s, {verdict:?}", total.as_secs());
    }
    Ok(())
}

fn main() {
    run_example().unwrap();
}
