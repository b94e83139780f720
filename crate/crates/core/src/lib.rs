//! Plan, execute, and analyze measurement experiments on software subjects.
//!
//! An [`ExperimentDefinition`](model::ExperimentDefinition) is expanded into a
//! shuffled [`RunTable`](design::RunTable), executed run by run under the
//! orchestrator's state machine with pluggable profilers, journaled for
//! crash-safe resumption, and finally analyzed with normality-gated
//! hypothesis tests.

pub mod cli;
pub mod design;
pub mod journal;
pub mod model;
pub mod orchestrator;
pub mod profilers;
pub mod shell;
pub mod stats;
