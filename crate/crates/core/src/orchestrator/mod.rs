//! Executes a run table: one coordinator, one run at a time.
//!
//! The coordinator drives [`state::transition`] and writes `status.json`
//! after every transition. Each run goes through
//! `before_run → start_measurement → interact → stop_measurement → after_run`,
//! and its terminal outcome is journaled before the next run starts.

mod diagnostics;
pub mod state;

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{Run, RunStatus, RunTable};
use crate::journal::{
    emit_run_table_csv, Journal, JournalError, Outcome, RecordStatus, RUN_TABLE_FILE,
};
use crate::model::{substitute, ExperimentDefinition, HookEvent, MetricRole, Mode};
use crate::profilers::{aggregate, MeasureSet, Profiler, RunContext};
use crate::shell::{self, WaitOutcome};

pub use diagnostics::{diagnostic_check, Check, DiagnosticsReport};
pub use state::{transition, EventKind, ExperimentState, IllegalTransition, LifecycleEvent, Phase};

pub const STATUS_FILE: &str = "status.json";
pub const CONTROL_FILE: &str = "control";
pub const LOG_DIR: &str = "logs";

/// Upper bound on any single hook invocation.
pub const HOOK_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("diagnostic checks failed:\n{0}")]
    Diagnostics(DiagnosticsReport),
    #[error("journal write failed, experiment aborted: {0}")]
    Journal(#[from] JournalError),
    #[error(transparent)]
    Transition(#[from] IllegalTransition),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Treatment parameters plus built-in variables for one run.
pub fn run_vars(def: &ExperimentDefinition, run: &Run) -> BTreeMap<String, String> {
    let mut vars = run.params(def);
    vars.insert("run_id".into(), run.run_id.clone());
    vars.insert("subject".into(), run.subject.clone());
    vars.insert("repetition".into(), run.repetition.to_string());
    vars.insert("output_dir".into(), def.output_dir.display().to_string());
    vars
}

/// Out-of-band requests: signals set the flags, operators write the control file.
#[derive(Debug, Default)]
pub struct Control {
    pause: AtomicBool,
    abort: AtomicBool,
    control_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlRequest {
    Continue,
    Pause,
    Abort,
}

impl ControlRequest {
    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "continue" | "c" | "" => Some(ControlRequest::Continue),
            "pause" | "p" => Some(ControlRequest::Pause),
            "abort" | "a" => Some(ControlRequest::Abort),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            ControlRequest::Continue => "continue",
            ControlRequest::Pause => "pause",
            ControlRequest::Abort => "abort",
        }
    }
}

/// Leaves a request for a running experiment in its output directory.
pub fn request_control(output_dir: &Path, request: ControlRequest) -> std::io::Result<()> {
    write_atomic(&output_dir.join(CONTROL_FILE), request.as_str().as_bytes())
}

impl Control {
    pub fn new() -> Self {
        Self::default()
    }

    /// Also honor requests written to `<output_dir>/control`.
    pub fn with_control_file(output_dir: &Path) -> Self {
        Control {
            control_file: Some(output_dir.join(CONTROL_FILE)),
            ..Self::default()
        }
    }

    pub fn request_pause(&self) {
        self.pause.store(true, Ordering::SeqCst);
    }

    pub fn request_abort(&self) {
        self.abort.store(true, Ordering::SeqCst);
    }

    pub fn abort_flag(&self) -> &AtomicBool {
        &self.abort
    }

    /// Consumes a pending control-file request.
    fn take_file_request(&self) -> Option<ControlRequest> {
        let path = self.control_file.as_ref()?;
        let text = std::fs::read_to_string(path).ok()?;
        let _ = std::fs::remove_file(path);
        ControlRequest::parse(&text)
    }

    /// Abort wins over pause; a continue request is ignored here.
    fn poll(&self) -> Option<ControlRequest> {
        match self.take_file_request() {
            Some(ControlRequest::Abort) => self.request_abort(),
            Some(ControlRequest::Pause) => self.request_pause(),
            _ => {}
        }
        if self.abort.load(Ordering::SeqCst) {
            Some(ControlRequest::Abort)
        } else if self.pause.swap(false, Ordering::SeqCst) {
            Some(ControlRequest::Pause)
        } else {
            None
        }
    }
}

/// Confirmation between runs in semi-automatic mode.
pub trait OperatorGate {
    fn wait(&mut self, next_run: &str, control: &Control) -> ControlRequest;
}

/// Confirms immediately.
#[derive(Debug, Default)]
pub struct AutoConfirm;

impl OperatorGate for AutoConfirm {
    fn wait(&mut self, _next_run: &str, control: &Control) -> ControlRequest {
        control.poll().unwrap_or(ControlRequest::Continue)
    }
}

/// Prompts on stderr and accepts an answer on stdin or through the control file.
pub struct ConsoleGate {
    lines: Option<Receiver<String>>,
    output_dir: PathBuf,
}

impl ConsoleGate {
    pub fn new(output_dir: &Path) -> Self {
        ConsoleGate {
            lines: None,
            output_dir: output_dir.to_path_buf(),
        }
    }

    fn lines(&mut self) -> &Receiver<String> {
        self.lines.get_or_insert_with(|| {
            let (tx, rx) = mpsc::channel();
            std::thread::spawn(move || {
                for line in std::io::stdin().lock().lines() {
                    let Ok(line) = line else { break };
                    if tx.send(line).is_err() {
                        break;
                    }
                }
            });
            rx
        })
    }
}

impl OperatorGate for ConsoleGate {
    fn wait(&mut self, next_run: &str, control: &Control) -> ControlRequest {
        eprintln!(
            "next run {next_run}: press Enter to continue, `p` to pause, `a` to abort \
             (or `exr status {} --continue`)",
            self.output_dir.display()
        );
        loop {
            if let Some(req) = control.take_file_request() {
                return req;
            }
            if control.abort.load(Ordering::SeqCst) {
                return ControlRequest::Abort;
            }
            if control.pause.swap(false, Ordering::SeqCst) {
                return ControlRequest::Pause;
            }
            match self.lines().recv_timeout(Duration::from_millis(100)) {
                Ok(line) => match ControlRequest::parse(&line) {
                    Some(req) => return req,
                    None => eprintln!("unrecognized answer `{line}`"),
                },
                Err(mpsc::RecvTimeoutError::Timeout) => {}
                // stdin closed: only the control file can answer now
                Err(mpsc::RecvTimeoutError::Disconnected) => {
                    std::thread::sleep(Duration::from_millis(100))
                }
            }
        }
    }
}

/// Progress snapshot persisted as `status.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusSnapshot {
    pub experiment: String,
    pub phase: Phase,
    pub current_run: Option<String>,
    pub total_runs: usize,
    pub completed: usize,
    pub failed: usize,
    pub pending: usize,
    pub estimated_run_time_s: f64,
    pub cooldown_s: f64,
    pub updated_at: String,
}

impl StatusSnapshot {
    pub fn new(def: &ExperimentDefinition, state: &ExperimentState) -> Self {
        StatusSnapshot {
            experiment: def.name.clone(),
            phase: state.phase,
            current_run: state.current_run.clone(),
            total_runs: state.total_runs,
            completed: state.completed_count,
            failed: state.failed_count,
            pending: state.remaining(),
            estimated_run_time_s: def.per_run_estimate().as_secs_f64(),
            cooldown_s: def.cooldown_s,
            updated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    /// pending × (per-run estimate + cooldown)
    pub fn eta(&self) -> Duration {
        Duration::from_secs_f64(
            self.pending as f64 * (self.estimated_run_time_s + self.cooldown_s).max(0.0),
        )
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(tmp, path)
}

pub fn write_status(output_dir: &Path, snapshot: &StatusSnapshot) -> std::io::Result<()> {
    let json = serde_json::to_string_pretty(snapshot).expect("status serializes");
    write_atomic(&output_dir.join(STATUS_FILE), json.as_bytes())
}

pub fn read_status(output_dir: &Path) -> std::io::Result<StatusSnapshot> {
    let text = std::fs::read_to_string(output_dir.join(STATUS_FILE))?;
    serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Per-metric values of one successful run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeasures {
    pub run_id: String,
    pub measures: BTreeMap<String, f64>,
    pub wall_time: f64,
    pub exit_status: i32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunFailure {
    #[error("hook `{event}` exited with status {code}")]
    Hook { event: HookEvent, code: i32 },
    #[error("hook `{event}` could not run: {message}")]
    HookSpawn { event: HookEvent, message: String },
    #[error("subject exceeded its timeout (exit status {exit_status})")]
    Timeout { exit_status: i32 },
    #[error("subject exited with status {0}")]
    SubjectExit(i32),
    #[error("subject could not start: {0}")]
    Spawn(String),
    #[error("{0}")]
    Profiler(String),
    #[error("dependent metric `{0}` has no value")]
    MissingMetric(String),
    #[error("run cancelled by abort request")]
    Cancelled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub result: Result<RunMeasures, RunFailure>,
    pub attempts: u32,
    /// Failures of the attempts that were retried.
    pub retried: Vec<RunFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedEvent {
    pub run_id: Option<String>,
    pub kind: EventKind,
    /// Seconds since the experiment started.
    pub at: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub state: ExperimentState,
    pub events: Vec<RecordedEvent>,
    /// The populated run table as written to `run_table.csv`.
    pub csv: String,
}

pub type ProgressFn = Box<dyn FnMut(&ExperimentState, &Run)>;

pub struct ExecuteOptions {
    /// Replace subjects by an in-process no-op.
    pub dry_run: bool,
    /// Re-execute runs whose latest journal record is `failed`.
    pub retry_failed: bool,
    pub control: Arc<Control>,
    pub gate: Box<dyn OperatorGate>,
    pub progress: Option<ProgressFn>,
}

impl Default for ExecuteOptions {
    fn default() -> Self {
        ExecuteOptions {
            dry_run: false,
            retry_failed: false,
            control: Arc::new(Control::new()),
            gate: Box::new(AutoConfirm),
            progress: None,
        }
    }
}

struct Coordinator<'a> {
    def: &'a ExperimentDefinition,
    state: ExperimentState,
    events: Vec<RecordedEvent>,
    started: Instant,
    dry_run: bool,
    control: Arc<Control>,
}

impl<'a> Coordinator<'a> {
    fn fire(&mut self, event: LifecycleEvent) -> Result<(), OrchestratorError> {
        self.state = transition(&self.state, &event)?;
        let run_id = event.run_id.or_else(|| self.state.current_run.clone());
        self.events.push(RecordedEvent {
            run_id,
            kind: event.kind,
            at: self.started.elapsed().as_secs_f64(),
        });
        self.write_status();
        Ok(())
    }

    fn write_status(&self) {
        if let Err(e) = write_status(
            &self.def.output_dir,
            &StatusSnapshot::new(self.def, &self.state),
        ) {
            log::warn!("cannot write status file: {e}");
        }
    }

    fn log_path(&self, name: &str) -> PathBuf {
        self.def
            .output_dir
            .join(LOG_DIR)
            .join(format!("{name}.log"))
    }

    fn log_file(&self, name: &str) -> Stdio {
        let path = self.log_path(name);
        if let Some(parent) = path.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        match OpenOptions::new().create(true).append(true).open(&path) {
            Ok(f) => Stdio::from(f),
            Err(_) => Stdio::null(),
        }
    }

    fn run_hook(&self, event: HookEvent, env: &[(String, String)]) -> Result<(), RunFailure> {
        let Some(path) = self.def.hooks.get(&event) else {
            return Ok(());
        };
        let spawn_err = |e: std::io::Error| RunFailure::HookSpawn {
            event,
            message: format!("{}: {e}", path.display()),
        };
        let mut cmd = std::process::Command::new(path);
        cmd.envs(env.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .stdin(Stdio::null())
            .stdout(self.log_file("hooks"))
            .stderr(self.log_file("hooks"));
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            cmd.current_dir(dir);
        }
        std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
        let mut child = cmd.spawn().map_err(spawn_err)?;
        let outcome = shell::wait_bounded(&mut child, HOOK_TIMEOUT, None).map_err(spawn_err)?;
        let code = shell::exit_code(outcome.status());
        if matches!(outcome, WaitOutcome::Exited(_)) && code == 0 {
            Ok(())
        } else {
            Err(RunFailure::Hook { event, code })
        }
    }

    fn experiment_env(&self, event: HookEvent) -> Vec<(String, String)> {
        vec![
            (
                "EXR_OUTPUT_DIR".into(),
                self.def.output_dir.display().to_string(),
            ),
            ("EXR_EVENT".into(), event.as_str().into()),
        ]
    }

    fn context(&self, run: &Run) -> RunContext {
        RunContext {
            run_id: run.run_id.clone(),
            subject: run.subject.clone(),
            repetition: run.repetition,
            treatments: run.treatments.clone(),
            vars: run_vars(self.def, run),
            output_dir: self.def.output_dir.clone(),
            seed: self.def.seed,
            started: Instant::now(),
        }
    }

    /// One attempt of the per-run body.
    fn attempt(
        &mut self,
        run: &Run,
        profilers: &mut [Box<dyn Profiler>],
    ) -> Result<RunMeasures, RunFailure> {
        let ctx = self.context(run);
        let env = |e: HookEvent| ctx.env(e.as_str());

        self.run_hook(HookEvent::BeforeRun, &env(HookEvent::BeforeRun))?;

        for i in 0..profilers.len() {
            if let Err(e) = profilers[i].start(&ctx) {
                for p in &mut profilers[..i] {
                    let _ = p.stop(&ctx);
                }
                return Err(RunFailure::Profiler(e.to_string()));
            }
        }
        self.fire(LifecycleEvent::new(EventKind::StartMeasurement))
            .expect("running phase accepts start_measurement");
        let mut failure = self
            .run_hook(
                HookEvent::StartMeasurement,
                &env(HookEvent::StartMeasurement),
            )
            .err();

        let subject = self
            .def
            .subject(&run.subject)
            .expect("run subjects come from the definition");
        let launch = Instant::now();
        let mut exit_status = 0;
        if failure.is_none() && !self.dry_run {
            let command = substitute(&subject.command, &ctx.vars)
                .map_err(|p| RunFailure::Spawn(format!("unresolved placeholder `{{{p}}}`")));
            let child = command.and_then(|cmd| {
                shell::shell(&cmd, Some(&subject.dir), &env(HookEvent::Interact))
                    .stdin(Stdio::null())
                    .stdout(self.log_file(&run.run_id))
                    .stderr(self.log_file(&run.run_id))
                    .spawn()
                    .map_err(|e| RunFailure::Spawn(e.to_string()))
            });
            match child {
                Err(f) => failure = Some(f),
                Ok(mut child) => {
                    for p in profilers.iter_mut() {
                        p.subject_started(child.id());
                    }
                    self.fire(LifecycleEvent::new(EventKind::Interact))
                        .expect("running phase accepts interact");
                    let interact = self.run_hook(HookEvent::Interact, &env(HookEvent::Interact));
                    match shell::wait_bounded(
                        &mut child,
                        subject.timeout(),
                        Some(self.control.abort_flag()),
                    ) {
                        Ok(WaitOutcome::Exited(status)) => {
                            exit_status = shell::exit_code(status);
                            if exit_status != 0 {
                                failure = Some(RunFailure::SubjectExit(exit_status));
                            }
                        }
                        Ok(WaitOutcome::TimedOut(status)) => {
                            exit_status = shell::exit_code(status);
                            failure = Some(RunFailure::Timeout { exit_status });
                        }
                        Ok(WaitOutcome::Cancelled(_)) => failure = Some(RunFailure::Cancelled),
                        Err(e) => failure = Some(RunFailure::Spawn(e.to_string())),
                    }
                    if failure.is_none() {
                        failure = interact.err();
                    }
                }
            }
        } else if failure.is_none() {
            self.fire(LifecycleEvent::new(EventKind::Interact))
                .expect("running phase accepts interact");
            failure = self
                .run_hook(HookEvent::Interact, &env(HookEvent::Interact))
                .err();
        }
        let wall_time = launch.elapsed().as_secs_f64();

        self.fire(LifecycleEvent::new(EventKind::StopMeasurement))
            .expect("running phase accepts stop_measurement");
        let stop_hook = self.run_hook(HookEvent::StopMeasurement, &env(HookEvent::StopMeasurement));
        let mut sets: Vec<(Vec<String>, MeasureSet)> = Vec::new();
        for p in profilers.iter_mut() {
            match p.stop(&ctx) {
                Ok(set) => sets.push((p.declared_metrics(), set)),
                Err(e) => {
                    failure.get_or_insert(RunFailure::Profiler(e.to_string()));
                }
            }
        }
        if let Err(f) = stop_hook {
            failure.get_or_insert(f);
        }
        if let Err(f) = self.run_hook(HookEvent::AfterRun, &env(HookEvent::AfterRun)) {
            failure.get_or_insert(f);
        }
        if let Some(f) = failure {
            return Err(f);
        }

        let mut measures = BTreeMap::new();
        for spec in &self.def.metrics {
            let producer = sets
                .iter()
                .find(|(declared, _)| declared.contains(&spec.name));
            match producer.map(|(_, set)| aggregate(set, spec)) {
                Some(Ok(v)) => {
                    measures.insert(spec.name.clone(), v);
                }
                _ if spec.role == MetricRole::Dependent => {
                    return Err(RunFailure::MissingMetric(spec.name.clone()))
                }
                _ => {}
            }
        }
        Ok(RunMeasures {
            run_id: run.run_id.clone(),
            measures,
            wall_time,
            exit_status,
        })
    }

    fn run_one(&mut self, run: &Run, profilers: &mut [Box<dyn Profiler>]) -> RunOutcome {
        let max_attempts = self.def.policy.max_retries + 1;
        let mut retried = Vec::new();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(run, profilers) {
                Ok(m) => {
                    return RunOutcome {
                        result: Ok(m),
                        attempts,
                        retried,
                    }
                }
                Err(f) if f == RunFailure::Cancelled || attempts >= max_attempts => {
                    return RunOutcome {
                        result: Err(f),
                        attempts,
                        retried,
                    }
                }
                Err(f) => {
                    log::warn!(
                        "run {} attempt {attempts} failed: {f}; retrying",
                        run.run_id
                    );
                    retried.push(f);
                }
            }
        }
    }

    /// Sleeps for the cooldown, waking early on abort.
    fn cooldown(&self) {
        let deadline = Instant::now() + self.def.cooldown();
        while Instant::now() < deadline {
            if self.control.abort.load(Ordering::SeqCst) {
                return;
            }
            let left = deadline.saturating_duration_since(Instant::now());
            std::thread::sleep(left.min(Duration::from_millis(50)));
        }
    }
}

/// Runs the per-run body for one pending run, retrying per the failure
/// policy, outside of a full experiment.
pub fn run_one(
    def: &ExperimentDefinition,
    run: &Run,
    profilers: &mut [Box<dyn Profiler>],
    dry_run: bool,
) -> RunOutcome {
    let mut state = ExperimentState::new(1, def.mode, 1.0);
    state.phase = Phase::Running;
    state.current_run = Some(run.run_id.clone());
    let mut co = Coordinator {
        def,
        state,
        events: Vec::new(),
        started: Instant::now(),
        dry_run,
        control: Arc::new(Control::new()),
    };
    let _ = std::fs::create_dir_all(&def.output_dir);
    co.run_one(run, profilers)
}

/// Executes every run without a terminal journal record, in table order.
///
/// Runs already journaled are folded into `table` first, so a resumed
/// experiment executes only what remains. Returns when the experiment
/// completes, aborts, or pauses.
pub fn execute(
    def: &ExperimentDefinition,
    table: &mut RunTable,
    journal: &mut Journal,
    profilers: &mut [Box<dyn Profiler>],
    mut opts: ExecuteOptions,
) -> Result<ExperimentResult, OrchestratorError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| OrchestratorError::Io { path, source }
    };
    std::fs::create_dir_all(&def.output_dir).map_err(io(&def.output_dir))?;

    let completed = journal.completed();
    let mut state = ExperimentState::new(table.len(), def.mode, def.policy.max_failed_fraction);
    let mut pending = Vec::new();
    for (i, run) in table.runs.iter_mut().enumerate() {
        match completed.get(&run.run_id) {
            Some(r) if r.status == RecordStatus::Done => {
                run.status = RunStatus::Done;
                run.measures = r.measures.clone();
                state.completed_count += 1;
            }
            Some(r) if r.status == RecordStatus::Failed && !opts.retry_failed => {
                run.status = RunStatus::Failed;
                state.failed_count += 1;
            }
            _ => {
                run.status = RunStatus::Pending;
                run.measures.clear();
                pending.push(i);
            }
        }
    }

    let mut co = Coordinator {
        def,
        state,
        events: Vec::new(),
        started: Instant::now(),
        dry_run: opts.dry_run,
        control: opts.control.clone(),
    };

    co.fire(LifecycleEvent::new(EventKind::BeforeExperiment))?;
    let report = diagnostic_check(def, profilers);
    if !report.passed() {
        co.fire(LifecycleEvent::new(EventKind::AbortRequested))?;
        return Err(OrchestratorError::Diagnostics(report));
    }
    if let Err(f) = co.run_hook(
        HookEvent::BeforeExperiment,
        &co.experiment_env(HookEvent::BeforeExperiment),
    ) {
        log::error!("{f}; aborting");
        co.fire(LifecycleEvent::new(EventKind::AbortRequested))?;
    }

    let mut paused = false;
    for (n, &idx) in pending.iter().enumerate() {
        if co.state.phase == Phase::Aborted {
            break;
        }
        if n > 0 {
            co.cooldown();
        }
        match co.control.poll() {
            Some(ControlRequest::Abort) => {
                co.fire(LifecycleEvent::new(EventKind::AbortRequested))?;
                break;
            }
            Some(ControlRequest::Pause) => {
                co.fire(LifecycleEvent::new(EventKind::PauseRequested))?;
                paused = true;
                break;
            }
            _ => {}
        }

        let run = table.runs[idx].clone();
        co.fire(LifecycleEvent::before_run(&run.run_id))?;
        if co.state.phase == Phase::WaitingOperator {
            match opts.gate.wait(&run.run_id, &co.control) {
                ControlRequest::Continue => {
                    co.fire(LifecycleEvent::new(EventKind::ContinueRequested))?
                }
                ControlRequest::Pause => {
                    co.fire(LifecycleEvent::new(EventKind::PauseRequested))?;
                    paused = true;
                    break;
                }
                ControlRequest::Abort => {
                    co.fire(LifecycleEvent::new(EventKind::AbortRequested))?;
                    break;
                }
            }
        }

        let outcome = co.run_one(&run, profilers);
        let record = match &outcome.result {
            Ok(m) => Outcome {
                run_id: run.run_id.clone(),
                status: RecordStatus::Done,
                measures: m.measures.clone(),
                wall_time: m.wall_time,
            },
            Err(RunFailure::Cancelled) => {
                co.fire(LifecycleEvent::new(EventKind::AbortRequested))?;
                break;
            }
            Err(f) => {
                log::warn!(
                    "run {} failed after {} attempt(s): {f}",
                    run.run_id,
                    outcome.attempts
                );
                Outcome {
                    run_id: run.run_id.clone(),
                    status: RecordStatus::Failed,
                    measures: BTreeMap::new(),
                    wall_time: 0.0,
                }
            }
        };
        if let Err(e) = journal.append(record.clone()) {
            co.fire(LifecycleEvent::new(EventKind::AbortRequested))?;
            return Err(OrchestratorError::Journal(e));
        }
        let slot = &mut table.runs[idx];
        slot.status = record.status.into();
        slot.measures = record.measures;
        co.fire(LifecycleEvent::new(match record.status {
            RecordStatus::Done => EventKind::AfterRun,
            RecordStatus::Failed => EventKind::RunFailed,
        }))?;
        if let Some(progress) = opts.progress.as_mut() {
            progress(&co.state, &table.runs[idx]);
        }
    }

    if !paused {
        if co.state.phase != Phase::Aborted && co.state.remaining() == 0 {
            co.fire(LifecycleEvent::new(EventKind::AfterExperiment))?;
        }
        if let Err(f) = co.run_hook(
            HookEvent::AfterExperiment,
            &co.experiment_env(HookEvent::AfterExperiment),
        ) {
            log::warn!("{f}");
        }
    }

    let csv = emit_run_table_csv(def, table, &journal.completed());
    let csv_path = def.output_dir.join(RUN_TABLE_FILE);
    write_atomic(&csv_path, csv.as_bytes()).map_err(io(&csv_path))?;
    co.write_status();

    Ok(ExperimentResult {
        state: co.state,
        events: co.events,
        csv,
    })
}

/// Dry-run stand-ins: every non-synthetic profiler becomes a synthetic one
/// reporting 1.0 for each metric it declared.
pub fn dry_run_profilers(
    profilers: Vec<Box<dyn Profiler>>,
    def: &ExperimentDefinition,
) -> Vec<Box<dyn Profiler>> {
    profilers
        .into_iter()
        .zip(&def.profilers)
        .map(|(p, cfg)| {
            let kind = cfg
                .settings
                .get("kind")
                .and_then(|v| v.as_str())
                .unwrap_or(&cfg.name);
            if kind == "synthetic" {
                p
            } else {
                let values = p.declared_metrics().into_iter().map(|m| (m, 1.0));
                Box::new(crate::profilers::SyntheticProfiler::constant(
                    p.name(),
                    values,
                )) as Box<dyn Profiler>
            }
        })
        .collect()
}

pub fn is_semi_automatic(def: &ExperimentDefinition) -> bool {
    def.mode == Mode::SemiAutomatic
}
