//! The experiment state machine as a pure transition function.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    NotStarted,
    Diagnosing,
    Running,
    CoolingDown,
    WaitingOperator,
    Paused,
    Completed,
    Aborted,
}

impl Phase {
    pub const ALL: [Phase; 8] = [
        Phase::NotStarted,
        Phase::Diagnosing,
        Phase::Running,
        Phase::CoolingDown,
        Phase::WaitingOperator,
        Phase::Paused,
        Phase::Completed,
        Phase::Aborted,
    ];

    /// Phases a pause request can interrupt.
    pub fn is_active(self) -> bool {
        matches!(
            self,
            Phase::Diagnosing | Phase::Running | Phase::CoolingDown | Phase::WaitingOperator
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Completed | Phase::Aborted)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::NotStarted => "not_started",
            Phase::Diagnosing => "diagnosing",
            Phase::Running => "running",
            Phase::CoolingDown => "cooling_down",
            Phase::WaitingOperator => "waiting_operator",
            Phase::Paused => "paused",
            Phase::Completed => "completed",
            Phase::Aborted => "aborted",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    BeforeExperiment,
    BeforeRun,
    StartMeasurement,
    Interact,
    StopMeasurement,
    AfterRun,
    ContinueRequested,
    PauseRequested,
    AbortRequested,
    RunFailed,
    AfterExperiment,
}

impl EventKind {
    pub const ALL: [EventKind; 11] = [
        EventKind::BeforeExperiment,
        EventKind::BeforeRun,
        EventKind::StartMeasurement,
        EventKind::Interact,
        EventKind::StopMeasurement,
        EventKind::AfterRun,
        EventKind::ContinueRequested,
        EventKind::PauseRequested,
        EventKind::AbortRequested,
        EventKind::RunFailed,
        EventKind::AfterExperiment,
    ];
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("event kinds serialize");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LifecycleEvent {
    pub kind: EventKind,
    /// The run a `before_run` event starts.
    pub run_id: Option<String>,
}

impl LifecycleEvent {
    pub fn new(kind: EventKind) -> Self {
        LifecycleEvent { kind, run_id: None }
    }

    pub fn before_run(run_id: impl Into<String>) -> Self {
        LifecycleEvent {
            kind: EventKind::BeforeRun,
            run_id: Some(run_id.into()),
        }
    }
}

impl From<EventKind> for LifecycleEvent {
    fn from(kind: EventKind) -> Self {
        LifecycleEvent::new(kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("illegal transition: event `{event}` in phase `{phase}`")]
pub struct IllegalTransition {
    pub phase: Phase,
    pub event: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentState {
    pub phase: Phase,
    pub current_run: Option<String>,
    pub completed_count: usize,
    pub failed_count: usize,
    pub total_runs: usize,
    pub mode: Mode,
    /// Failed fraction of the table above which the experiment aborts.
    pub max_failed_fraction: f64,
    /// Phase to return to when a pause ends.
    pub paused_from: Option<Phase>,
}

impl ExperimentState {
    pub fn new(total_runs: usize, mode: Mode, max_failed_fraction: f64) -> Self {
        ExperimentState {
            phase: Phase::NotStarted,
            current_run: None,
            completed_count: 0,
            failed_count: 0,
            total_runs,
            mode,
            max_failed_fraction,
            paused_from: None,
        }
    }

    pub fn remaining(&self) -> usize {
        self.total_runs
            .saturating_sub(self.completed_count + self.failed_count)
    }

    fn failure_cap_exceeded(&self) -> bool {
        self.total_runs > 0
            && self.failed_count as f64 / self.total_runs as f64 > self.max_failed_fraction
    }
}

/// Applies one event. Pure: the input state is never modified.
pub fn transition(
    state: &ExperimentState,
    event: &LifecycleEvent,
) -> Result<ExperimentState, IllegalTransition> {
    use EventKind as E;
    use Phase as P;

    let illegal = || IllegalTransition {
        phase: state.phase,
        event: event.kind,
    };
    let mut next = state.clone();
    let finish_run = |next: &mut ExperimentState| {
        next.current_run = None;
        next.phase = if next.failure_cap_exceeded() {
            P::Aborted
        } else if next.remaining() == 0 {
            P::Completed
        } else {
            P::CoolingDown
        };
    };

    match (state.phase, event.kind) {
        (P::NotStarted, E::BeforeExperiment) => next.phase = P::Diagnosing,

        (P::Diagnosing, E::BeforeRun) if state.remaining() > 0 => {
            next.phase = P::Running;
            next.current_run = event.run_id.clone();
        }
        (P::CoolingDown, E::BeforeRun) if state.remaining() > 0 => {
            next.phase = match state.mode {
                crate::model::Mode::Automatic => P::Running,
                crate::model::Mode::SemiAutomatic => P::WaitingOperator,
            };
            next.current_run = event.run_id.clone();
        }
        (P::WaitingOperator, E::ContinueRequested) => next.phase = P::Running,

        (P::Running, E::StartMeasurement | E::Interact | E::StopMeasurement) => {}
        (P::Running, E::AfterRun) if state.remaining() > 0 => {
            next.completed_count += 1;
            finish_run(&mut next);
        }
        (P::Running, E::RunFailed) if state.remaining() > 0 => {
            next.failed_count += 1;
            finish_run(&mut next);
        }

        (P::Diagnosing | P::Completed, E::AfterExperiment) if state.remaining() == 0 => {
            next.phase = P::Completed;
            next.current_run = None;
        }
        (P::Aborted, E::AfterExperiment) => {}

        (p, E::PauseRequested) if p.is_active() => {
            next.paused_from = Some(p);
            next.phase = P::Paused;
        }
        (P::Paused, E::ContinueRequested) => {
            next.phase = state.paused_from.ok_or_else(illegal)?;
            next.paused_from = None;
        }

        (p, E::AbortRequested) if !p.is_terminal() => {
            next.phase = P::Aborted;
            next.paused_from = None;
        }

        _ => return Err(illegal()),
    }
    Ok(next)
}
