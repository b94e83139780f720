use std::fmt;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::cross_product;
use crate::model::{substitute, ExperimentDefinition};
use crate::profilers::Profiler;

use super::run_vars;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub checks: Vec<Check>,
}

impl DiagnosticsReport {
    fn record(&mut self, name: impl Into<String>, result: Result<String, String>) {
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for DiagnosticsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let mark = if c.passed { "pass" } else { "FAIL" };
            writeln!(f, "[{mark}] {}: {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

fn check_output_dir(dir: &Path) -> Result<String, String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let probe = dir.join(".exr-write-probe");
    std::fs::write(&probe, b"ok").map_err(|e| format!("{} is not writable: {e}", dir.display()))?;
    let _ = std::fs::remove_file(probe);
    Ok(format!("{} is writable", dir.display()))
}

fn check_executable(path: &Path) -> Result<String, String> {
    let meta = std::fs::metadata(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if !meta.is_file() {
        return Err(format!("{} is not a regular file", path.display()));
    }
    if meta.permissions().mode() & 0o111 == 0 {
        return Err(format!("{} is not executable", path.display()));
    }
    Ok(format!("{} is executable", path.display()))
}

/// Pre-flight checks: output directory, hooks, subject commands, profilers,
/// and metric coverage. Failures are entries of the report.
pub fn diagnostic_check(
    def: &ExperimentDefinition,
    profilers: &[Box<dyn Profiler>],
) -> DiagnosticsReport {
    let mut report = DiagnosticsReport::default();
    report.record("output_dir", check_output_dir(&def.output_dir));

    for (event, path) in &def.hooks {
        report.record(format!("hook:{event}"), check_executable(path));
    }

    let runs = cross_product(def).unwrap_or_default();
    for subject in &def.subjects {
        let mut result = Err(format!(
            "command `{}` resolves for no treatment combination",
            subject.command
        ));
        for run in runs.iter().filter(|r| r.subject == subject.name) {
            if let Ok(cmd) = substitute(&subject.command, &run_vars(def, run)) {
                result = Ok(format!("e.g. `{cmd}`"));
                break;
            }
        }
        if result.is_ok() && !subject.dir.is_dir() {
            result = Err(format!(
                "working directory {} does not exist",
                subject.dir.display()
            ));
        }
        report.record(format!("subject:{}", subject.name), result);
    }

    for p in profilers {
        report.record(
            format!("profiler:{}", p.name()),
            p.check_ready()
                .map(|_| "ready".to_string())
                .map_err(|e| e.to_string()),
        );
        let undeclared: Vec<String> = p
            .declared_metrics()
            .into_iter()
            .filter(|m| def.metric(m).is_none())
            .collect();
        if !undeclared.is_empty() {
            report.record(
                format!("profiler:{}:metrics", p.name()),
                Err(format!("produces undefined metrics {undeclared:?}")),
            );
        }
    }

    for m in def.dependent_metrics() {
        let producers: Vec<&str> = profilers
            .iter()
            .filter(|p| p.declared_metrics().contains(&m.name))
            .map(|p| p.name())
            .collect();
        let result = match producers.len() {
            0 => Err("no profiler produces this metric".to_string()),
            1 => Ok(format!("produced by {}", producers[0])),
            _ => Err(format!("produced by several profilers: {producers:?}")),
        };
        report.record(format!("metric:{}", m.name), result);
    }

    report
}
