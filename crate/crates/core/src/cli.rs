//! The `exr` command surface: `init`, `plan`, `run`, `status`, `analyze`, `report`.
//!
//! Each subcommand is a plain function returning a typed result, so the same
//! workflow can be driven from code. [`CliError::exit_code`] maps failures to
//! the process exit status.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::design::{
    apply_fraction, format_duration, generate_run_table, DesignError, Fraction, PlanSummary,
    RunTable,
};
use crate::journal::{
    emit_run_table_csv, load_completed, parse_run_table_csv, CsvError, Journal, JournalError,
    JOURNAL_FILE, RUN_TABLE_FILE,
};
use crate::model::{
    load_definition, parse_definition, serialize_definition, validate, ExperimentDefinition,
    HookEvent, Mode, ModelError, ValidationReport,
};
use crate::orchestrator::{
    self, dry_run_profilers, read_status, request_control, AutoConfirm, ConsoleGate, Control,
    ControlRequest, DiagnosticsReport, ExecuteOptions, ExperimentResult, ExperimentState,
    OperatorGate, OrchestratorError, Phase, StatusSnapshot,
};
use crate::profilers::{ProfilerError, ProfilerRegistry};
use crate::stats::{analyze, AnalysisReport, StatsError};

pub const CONFIG_FILE: &str = "experiment.json";
pub const DEFINITION_FILE: &str = "definition.json";
pub const ANALYSIS_JSON: &str = "analysis.json";
pub const ANALYSIS_MD: &str = "analysis.md";
pub const REPORT_FILE: &str = "report.md";

#[derive(Debug, Parser)]
#[command(
    name = "exr",
    version,
    about = "Plan, run, and analyze software energy experiments"
)]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scaffold a replication package in an empty directory.
    Init {
        dir: PathBuf,
        #[arg(long)]
        name: Option<String>,
    },
    /// Expand the run table and estimate the experiment duration.
    Plan {
        config: PathBuf,
        #[arg(long)]
        fraction: Option<Fraction>,
    },
    /// Execute the experiment.
    Run(RunArgs),
    /// Show progress, or send a request to a running experiment.
    Status {
        output_dir: PathBuf,
        #[arg(long = "continue", group = "request")]
        resume: bool,
        #[arg(long, group = "request")]
        pause: bool,
        #[arg(long, group = "request")]
        abort: bool,
    },
    /// Test every hypothesis on the populated run table.
    Analyze { output_dir: PathBuf },
    /// Write a study-style markdown report.
    Report { output_dir: PathBuf },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Continue from the journal of an earlier invocation.
    #[arg(long)]
    pub resume: bool,
    /// Start over, moving an existing journal aside.
    #[arg(long, conflicts_with = "resume")]
    pub force: bool,
    #[arg(long)]
    pub fraction: Option<Fraction>,
    /// Replace subjects by a no-op and profilers by synthetic ones.
    #[arg(long)]
    pub dry_run: bool,
    /// With --resume, also re-execute runs that failed.
    #[arg(long, requires = "resume")]
    pub retry_failed: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid experiment definition:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("plan exceeds the time budget:\n{0}")]
    Infeasible(PlanSummary),
    #[error("{}", .0.to_string().trim_end())]
    Diagnostics(DiagnosticsReport),
    #[error("experiment aborted after {done} done and {failed} failed of {total} runs")]
    Aborted {
        done: usize,
        failed: usize,
        total: usize,
    },
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("{} already exists; pass --resume to continue or --force to start over", .0.display())]
    JournalExists(PathBuf),
    #[error("{} is not empty", .0.display())]
    NotEmpty(PathBuf),
    #[error(transparent)]
    Profiler(#[from] ProfilerError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Orchestrator(OrchestratorError),
}

impl CliError {
    /// 0 ok, 1 usage or parse, 2 infeasible plan, 3 diagnostics, 4 aborted.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Infeasible(_) => 2,
            CliError::Diagnostics(_) => 3,
            CliError::Aborted { .. } | CliError::Journal(_) => 4,
            CliError::Orchestrator(OrchestratorError::Journal(_)) => 4,
            _ => 1,
        }
    }
}

impl From<OrchestratorError> for CliError {
    fn from(e: OrchestratorError) -> Self {
        match e {
            OrchestratorError::Diagnostics(report) => CliError::Diagnostics(report),
            other => CliError::Orchestrator(other),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(io_err(path))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

const TEMPLATE: &str = r#"{
  "name": "NAME",
  "gqm": {
    "goal": "Analyze <subjects> for the purpose of comparing <treatments> with respect to energy consumption",
    "questions": ["RQ1: Does the treatment affect the energy consumption of the subjects?"],
    "metrics": ["energy"]
  },
  "factors": [
    {
      "name": "treatment",
      "kind": "main",
      "treatments": [
        {"name": "A", "params": {"flag": "--a"}},
        {"name": "B", "params": {"flag": "--b"}}
      ]
    }
  ],
  "subjects": [],
  "metrics": [
    {"name": "energy", "unit": "joule", "aggregation": "sum", "role": "dependent"}
  ],
  "hypotheses": [
    {"id": "H1", "metric": "energy", "factor": "treatment", "treatment_a": "A", "treatment_b": "B", "direction": "two_sided"}
  ],
  "repetitions": 10,
  "cooldown_s": 30,
  "estimated_run_time_s": 60,
  "mode": "automatic",
  "seed": 1,
  "profilers": [
    {"name": "rapl", "settings": {"domain": "/sys/class/powercap/intel-rapl:0", "metric": "energy"}}
  ],
  "hooks": {
    "before_experiment": "hooks/before_experiment.sh",
    "before_run": "hooks/before_run.sh",
    "after_run": "hooks/after_run.sh",
    "after_experiment": "hooks/after_experiment.sh"
  },
  "output_dir": "data"
}
"#;

const HOOK_STUB: &str = "#!/bin/sh
# EVENT hook. Available: EXR_EVENT, EXR_OUTPUT_DIR, and per run EXR_RUN_ID,
# EXR_SUBJECT, EXR_REPETITION, EXR_TREATMENT_<FACTOR>.
# A nonzero exit status fails the run.
exit 0
";

const README_TEMPLATE: &str = "# NAME

Replication package.

## Layout

- `experiment.json`: goal, questions, factors, subjects, metrics, hypotheses
- `hooks/`: scripts run around the experiment and each run
- `data/`: run table, journal, per-run logs, and analysis output
- `analysis/`: additional analysis scripts

## Reproducing

```sh
exr plan experiment.json
exr run experiment.json
exr analyze data
exr report data
```

Add at least one subject to `experiment.json` before planning.
";

/// Creates `experiment.json`, `README.md`, `hooks/`, `data/`, and `analysis/`.
pub fn cmd_init(dir: &Path, name: Option<&str>) -> Result<Vec<PathBuf>, CliError> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).map_err(io_err(dir))?;
        if entries.next().is_some() {
            return Err(CliError::NotEmpty(dir.to_path_buf()));
        }
    }
    let name = name.map(str::to_string).unwrap_or_else(|| {
        dir.file_name()
            .and_then(|n| n.to_str())
            .filter(|n| !n.is_empty())
            .unwrap_or("experiment")
            .to_string()
    });
    let hooks = dir.join("hooks");
    for sub in [&hooks, &dir.join("data"), &dir.join("analysis")] {
        std::fs::create_dir_all(sub).map_err(io_err(sub))?;
    }
    let name_json = serde_json::to_string(&name).expect("strings serialize");
    let template = TEMPLATE.replace("\"NAME\"", &name_json);
    write(&dir.join(CONFIG_FILE), &template)?;
    write(
        &dir.join("README.md"),
        &README_TEMPLATE.replace("NAME", &name),
    )?;
    for event in [
        HookEvent::BeforeExperiment,
        HookEvent::BeforeRun,
        HookEvent::AfterRun,
        HookEvent::AfterExperiment,
    ] {
        let path = hooks.join(format!("{event}.sh"));
        write(&path, &HOOK_STUB.replace("EVENT", event.as_str()))?;
        set_executable(&path)?;
    }
    Ok(
        ["experiment.json", "README.md", "hooks", "data", "analysis"]
            .iter()
            .map(|p| dir.join(p))
            .collect(),
    )
}

fn set_executable(path: &Path) -> Result<(), CliError> {
    use std::os::unix::fs::PermissionsExt;
    std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o755)).map_err(io_err(path))
}

/// Loads and validates a configuration, logging warnings.
pub fn load_validated(config: &Path) -> Result<ExperimentDefinition, CliError> {
    let config = std::fs::canonicalize(config).map_err(io_err(config))?;
    let def = load_definition(&config)?;
    let report = validate(&def);
    if !report.is_ok() {
        return Err(CliError::Invalid(report));
    }
    for f in &report.findings {
        log::warn!("{}", f.message);
    }
    Ok(def)
}

fn planned_table(
    def: &ExperimentDefinition,
    fraction: Option<Fraction>,
) -> Result<RunTable, CliError> {
    let table = generate_run_table(def)?;
    Ok(match fraction {
        Some(f) => apply_fraction(def, &table, f, def.seed),
        None => table,
    })
}

#[derive(Debug)]
pub struct PlanOutcome {
    pub definition: ExperimentDefinition,
    pub table: RunTable,
    pub summary: PlanSummary,
}

/// Writes `run_table.csv`, `definition.json`, and `status.json`.
///
/// An over-budget plan still writes its artifacts before reporting
/// [`CliError::Infeasible`].
pub fn cmd_plan(config: &Path, fraction: Option<Fraction>) -> Result<PlanOutcome, CliError> {
    let def = load_validated(config)?;
    let table = planned_table(&def, fraction)?;
    let out = &def.output_dir;
    std::fs::create_dir_all(out).map_err(io_err(out))?;

    let journal = out.join(JOURNAL_FILE);
    let completed = load_completed(&journal)?;
    write(
        &out.join(RUN_TABLE_FILE),
        &emit_run_table_csv(&def, &table, &completed),
    )?;
    write(&out.join(DEFINITION_FILE), &serialize_definition(&def))?;
    if !out.join(orchestrator::STATUS_FILE).exists() {
        let state = ExperimentState::new(table.len(), def.mode, def.policy.max_failed_fraction);
        orchestrator::write_status(out, &StatusSnapshot::new(&def, &state)).map_err(io_err(out))?;
    }

    let summary = PlanSummary::new(&def, &table);
    if !summary.verdict.is_ok() {
        return Err(CliError::Infeasible(summary));
    }
    Ok(PlanOutcome {
        definition: def,
        table,
        summary,
    })
}

/// Per-run progress line on stderr.
fn progress_printer() -> orchestrator::ProgressFn {
    Box::new(|state, run| {
        let measures: Vec<String> = run
            .measures
            .iter()
            .map(|(k, v)| format!("{k}={v:.4}"))
            .collect();
        eprintln!(
            "[{}/{}] {} {} {}",
            state.completed_count + state.failed_count,
            state.total_runs,
            run.run_id,
            run.status.as_csv(),
            measures.join(" ")
        );
    })
}

/// Executes (or resumes) the experiment described by `args.config`.
///
/// A paused experiment returns `Ok` with phase `paused`; an aborted one is
/// [`CliError::Aborted`].
pub fn cmd_run(args: &RunArgs, control: Arc<Control>) -> Result<ExperimentResult, CliError> {
    let def = load_validated(&args.config)?;
    let gate: Box<dyn OperatorGate> = match def.mode {
        Mode::SemiAutomatic => Box::new(ConsoleGate::new(&def.output_dir)),
        Mode::Automatic => Box::new(AutoConfirm),
    };
    run_with_gate(&def, args, control, gate)
}

/// [`cmd_run`] on an already loaded definition, with a caller-chosen operator gate.
pub fn run_with_gate(
    def: &ExperimentDefinition,
    args: &RunArgs,
    control: Arc<Control>,
    gate: Box<dyn OperatorGate>,
) -> Result<ExperimentResult, CliError> {
    let mut table = planned_table(def, args.fraction)?;
    let summary = PlanSummary::new(def, &table);
    if !summary.verdict.is_ok() {
        log::warn!("{}", summary.to_string().replace('\n', "; "));
    }

    let out = &def.output_dir;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let journal_path = out.join(JOURNAL_FILE);
    let has_journal = std::fs::metadata(&journal_path).is_ok_and(|m| m.len() > 0);
    if has_journal && !args.resume {
        if !args.force {
            return Err(CliError::JournalExists(journal_path));
        }
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S");
        let aside = out.join(format!("{JOURNAL_FILE}.{stamp}.bak"));
        std::fs::rename(&journal_path, &aside).map_err(io_err(&journal_path))?;
        log::warn!("moved the previous journal to {}", aside.display());
    }
    write(&out.join(DEFINITION_FILE), &serialize_definition(def))?;

    let mut journal = Journal::open(&journal_path)?;
    let profilers = ProfilerRegistry::with_builtins().build_all(def)?;
    let mut profilers = if args.dry_run {
        dry_run_profilers(profilers, def)
    } else {
        profilers
    };
    let options = ExecuteOptions {
        dry_run: args.dry_run,
        retry_failed: args.retry_failed,
        control,
        gate,
        progress: Some(progress_printer()),
    };
    let result = orchestrator::execute(def, &mut table, &mut journal, &mut profilers, options)?;
    let s = &result.state;
    match s.phase {
        Phase::Aborted => Err(CliError::Aborted {
            done: s.completed_count,
            failed: s.failed_count,
            total: s.total_runs,
        }),
        _ => Ok(result),
    }
}

/// Installs an interrupt handler: the first signal pauses after the current
/// run, the second aborts it.
pub fn install_signal_handler(control: Arc<Control>) -> Result<(), ctrlc::Error> {
    let hits = AtomicUsize::new(0);
    ctrlc::set_handler(move || {
        if hits.fetch_add(1, Ordering::SeqCst) == 0 {
            eprintln!("pausing after the current run (interrupt again to abort)");
            control.request_pause();
        } else {
            eprintln!("aborting");
            control.request_abort();
        }
    })
}

pub fn format_status(s: &StatusSnapshot) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "experiment: {}", s.experiment);
    let _ = writeln!(out, "phase: {}", s.phase);
    let _ = writeln!(
        out,
        "pending: {}, done: {}, failed: {} (total {})",
        s.pending, s.completed, s.failed, s.total_runs
    );
    if let Some(run) = &s.current_run {
        let _ = writeln!(out, "current run: {run}");
    }
    let _ = writeln!(out, "eta: {}", format_duration(s.eta()));
    let _ = writeln!(out, "updated: {}", s.updated_at);
    out
}

pub fn cmd_status(output_dir: &Path) -> Result<StatusSnapshot, CliError> {
    let path = output_dir.join(orchestrator::STATUS_FILE);
    read_status(output_dir).map_err(io_err(&path))
}

/// Definition and populated table of an output directory.
pub fn load_results(output_dir: &Path) -> Result<(ExperimentDefinition, RunTable), CliError> {
    let mut def = parse_definition(&read(&output_dir.join(DEFINITION_FILE))?)?;
    def.output_dir = output_dir.to_path_buf();
    let table = parse_run_table_csv(&def, &read(&output_dir.join(RUN_TABLE_FILE))?)?;
    Ok((def, table))
}

/// Writes `analysis.json` and `analysis.md`.
pub fn cmd_analyze(output_dir: &Path) -> Result<AnalysisReport, CliError> {
    let (def, table) = load_results(output_dir)?;
    let report = analyze(&def, &table)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write(&output_dir.join(ANALYSIS_JSON), &(json + "\n"))?;
    write(&output_dir.join(ANALYSIS_MD), &report.to_markdown())?;
    Ok(report)
}

fn mentions(question: &str, word: &str) -> bool {
    question.to_lowercase().contains(&word.to_lowercase())
}

/// Study-shaped markdown: goal, design, one section per research question,
/// descriptive tables, correlations, and data-sanity flags.
pub fn render_report(
    def: &ExperimentDefinition,
    table: &RunTable,
    report: &AnalysisReport,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {}\n", def.name);
    let _ = writeln!(s, "## Goal\n\n{}\n", def.gqm.goal);
    if !def.gqm.metrics.is_empty() {
        let _ = writeln!(s, "Metrics: {}.\n", def.gqm.metrics.join(", "));
    }

    let _ = writeln!(s, "## Design\n");
    let _ = writeln!(s, "| factor | kind | treatments |");
    let _ = writeln!(s, "|---|---|---|");
    for f in &def.factors {
        let names: Vec<&str> = f.treatments.iter().map(|t| t.name.as_str()).collect();
        let kind = serde_json::to_value(f.kind).expect("kind serializes");
        let _ = writeln!(
            s,
            "| {} | {} | {} |",
            f.name,
            kind.as_str().unwrap_or("?"),
            names.join(", ")
        );
    }
    let subjects: Vec<&str> = def.subjects.iter().map(|x| x.name.as_str()).collect();
    let summary = PlanSummary::new(def, table);
    let _ = writeln!(
        s,
        "\nSubjects: {}. Repetitions: {}. {} runs over {} trials, randomized with seed {} (order digest `{}`). \
         Cooldown {} s. Estimated duration {}.\n",
        subjects.join(", "),
        def.repetitions,
        summary.runs,
        summary.trials,
        def.seed,
        &table.order_digest[..12.min(table.order_digest.len())],
        def.cooldown_s,
        format_duration(summary.estimated)
    );

    let _ = writeln!(s, "## Results\n");
    let mut placed = vec![false; report.hypotheses.len()];
    for (i, q) in def.gqm.questions.iter().enumerate() {
        let _ = writeln!(
            s,
            "### RQ{}: {}\n",
            i + 1,
            q.trim_start_matches(&format!("RQ{}:", i + 1)).trim()
        );
        let mut any = false;
        for (j, h) in report.hypotheses.iter().enumerate() {
            let single = def.gqm.questions.len() == 1;
            if single || mentions(q, &h.metric) || mentions(q, &h.factor) {
                s.push_str(&h.to_markdown());
                s.push('\n');
                placed[j] = true;
                any = true;
            }
        }
        if !any {
            let _ = writeln!(s, "No hypothesis is linked to this question.\n");
        }
    }
    if placed.iter().any(|p| !p) {
        let _ = writeln!(s, "### Other hypotheses\n");
        for (h, _) in report.hypotheses.iter().zip(&placed).filter(|(_, p)| !**p) {
            s.push_str(&h.to_markdown());
            s.push('\n');
        }
    }

    s.push_str(&report.descriptive_markdown());
    s.push_str(&report.correlation_markdown());
    s.push_str(&report.flags_markdown());
    s
}

/// Analyzes and writes `report.md`.
pub fn cmd_report(output_dir: &Path) -> Result<String, CliError> {
    let report = cmd_analyze(output_dir)?;
    let (def, table) = load_results(output_dir)?;
    let text = render_report(&def, &table, &report);
    write(&output_dir.join(REPORT_FILE), &text)?;
    Ok(text)
}

/// Runs a parsed command line, printing to stdout.
pub fn dispatch(cli: Cli, control: Arc<Control>) -> Result<(), CliError> {
    match cli.command {
        Command::Init { dir, name } => {
            for p in cmd_init(&dir, name.as_deref())? {
                println!("created {}", p.display());
            }
        }
        Command::Plan { config, fraction } => match cmd_plan(&config, fraction) {
            Ok(plan) => println!("{}", plan.summary),
            Err(CliError::Infeasible(summary)) => {
                println!("{summary}");
                return Err(CliError::Infeasible(summary));
            }
            Err(e) => return Err(e),
        },
        Command::Run(args) => {
            let result = cmd_run(&args, control)?;
            let s = &result.state;
            println!(
                "{}: {} done, {} failed of {} runs",
                s.phase, s.completed_count, s.failed_count, s.total_runs
            );
            if s.phase == Phase::Paused {
                println!("resume with: exr run --resume {}", args.config.display());
            }
        }
        Command::Status {
            output_dir,
            resume,
            pause,
            abort,
        } => {
            let request = if resume {
                Some(ControlRequest::Continue)
            } else if pause {
                Some(ControlRequest::Pause)
            } else if abort {
                Some(ControlRequest::Abort)
            } else {
                None
            };
            if let Some(req) = request {
                request_control(&output_dir, req).map_err(io_err(&output_dir))?;
                println!("requested {req:?}");
            }
            print!("{}", format_status(&cmd_status(&output_dir)?));
        }
        Command::Analyze { output_dir } => {
            cmd_analyze(&output_dir)?;
            print!(
                "{}",
                std::fs::read_to_string(output_dir.join(ANALYSIS_MD)).unwrap_or_default()
            );
        }
        Command::Report { output_dir } => {
            cmd_report(&output_dir)?;
            println!("wrote {}", output_dir.join(REPORT_FILE).display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_scaffolds_a_parseable_template() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("study");
        let created = cmd_init(&dir, Some("study")).unwrap();
        assert_eq!(created.len(), 5);
        assert!(created.iter().all(|p| p.exists()));
        let def = parse_definition(&read(&dir.join(CONFIG_FILE)).unwrap()).unwrap();
        assert!(def.subjects.is_empty());
        assert!(matches!(cmd_init(&dir, None), Err(CliError::NotEmpty(_))));
    }

    #[test]
    fn plan_of_untouched_template_names_subjects() {
        let tmp = tempfile::tempdir().unwrap();
        cmd_init(tmp.path(), None).unwrap();
        let err = cmd_plan(&tmp.path().join(CONFIG_FILE), None).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("subject"), "{err}");
    }

    #[test]
    fn status_requests_are_mutually_exclusive() {
        assert!(Cli::try_parse_from(["exr", "status", "out", "--pause", "--abort"]).is_err());
        assert!(Cli::try_parse_from(["exr", "status", "out", "--pause"]).is_ok());
        assert!(Cli::try_parse_from(["exr", "run", "x.json", "--retry-failed"]).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::NotEmpty(PathBuf::new()).exit_code(), 1);
        assert_eq!(
            CliError::Aborted {
                done: 0,
                failed: 3,
                total: 3
            }
            .exit_code(),
            4
        );
    }
}
