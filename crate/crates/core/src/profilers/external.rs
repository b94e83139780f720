use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::process::{Child, Stdio};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::{
    setting_f64, setting_str, MeasureSet, Profiler, ProfilerError, RunContext, Settings,
    SAMPLE_BUFFER_CAP,
};
use crate::shell;

/// Wraps a vendor meter CLI or script.
///
/// The command is started with the measurement and stopped (SIGTERM, then
/// SIGKILL after `stop_timeout_ms`) when the measurement stops, unless it
/// has exited on its own. Its standard output is read line by line as
/// `metric_name,value`; `map` renames output names to metric names and
/// lines naming anything undeclared are ignored.
pub struct ExternalCommandProfiler {
    name: String,
    command: String,
    rename: BTreeMap<String, String>,
    metrics: Vec<String>,
    stop_timeout: Duration,
    running: Option<Running>,
}

struct Running {
    child: Child,
    reader: JoinHandle<Vec<(f64, String)>>,
}

impl ExternalCommandProfiler {
    pub fn from_settings(name: &str, settings: &Settings) -> Result<Self, ProfilerError> {
        let setting = |key: &str, message: &str| ProfilerError::Setting {
            profiler: name.to_string(),
            key: key.to_string(),
            message: message.to_string(),
        };
        let command =
            setting_str(settings, "command").ok_or_else(|| setting("command", "required"))?;
        let rename: BTreeMap<String, String> = match settings.get("map") {
            None => BTreeMap::new(),
            Some(serde_json::Value::Object(m)) => m
                .iter()
                .map(|(k, v)| {
                    v.as_str()
                        .map(|s| (k.clone(), s.to_string()))
                        .ok_or_else(|| setting("map", "values must be metric names"))
                })
                .collect::<Result<_, _>>()?,
            Some(_) => return Err(setting("map", "expected an object")),
        };
        let mut metrics: Vec<String> = match settings.get("metrics") {
            None => Vec::new(),
            Some(serde_json::Value::Array(a)) => a
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| setting("metrics", "expected metric names"))
                })
                .collect::<Result<_, _>>()?,
            Some(serde_json::Value::String(s)) => {
                s.split(',').map(|m| m.trim().to_string()).collect()
            }
            Some(_) => return Err(setting("metrics", "expected a list")),
        };
        for m in rename.values() {
            if !metrics.contains(m) {
                metrics.push(m.clone());
            }
        }
        if metrics.is_empty() {
            return Err(setting(
                "metrics",
                "declare at least one metric via `metrics` or `map`",
            ));
        }
        let stop_timeout = Duration::from_secs_f64(
            setting_f64(name, settings, "stop_timeout_ms", 2000.0)?.max(0.0) / 1000.0,
        );
        Ok(ExternalCommandProfiler {
            name: name.to_string(),
            command,
            rename,
            metrics,
            stop_timeout,
            running: None,
        })
    }

    fn failed(&self, message: impl Into<String>) -> ProfilerError {
        ProfilerError::Failed {
            profiler: self.name.clone(),
            message: message.into(),
        }
    }
}

/// Parses one `metric,value` line.
pub(crate) fn parse_line(line: &str) -> Option<(&str, f64)> {
    let (name, value) = line.trim().split_once(',')?;
    let value: f64 = value.trim().parse().ok()?;
    let name = name.trim();
    (!name.is_empty() && value.is_finite()).then_some((name, value))
}

impl Profiler for ExternalCommandProfiler {
    fn name(&self) -> &str {
        &self.name
    }

    fn declared_metrics(&self) -> Vec<String> {
        self.metrics.clone()
    }

    fn check_ready(&self) -> Result<(), ProfilerError> {
        if self.command.trim().is_empty() {
            return Err(ProfilerError::NotReady {
                profiler: self.name.clone(),
                message: "empty command".into(),
            });
        }
        Ok(())
    }

    fn start(&mut self, ctx: &RunContext) -> Result<(), ProfilerError> {
        let env = ctx.env("start_measurement");
        let mut child = shell::shell(&self.command, None, &env)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| self.failed(format!("cannot spawn `{}`: {e}", self.command)))?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let started = ctx.started;
        let reader = std::thread::spawn(move || {
            let mut lines = Vec::new();
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if lines.len() < SAMPLE_BUFFER_CAP {
                    lines.push((started.elapsed().as_secs_f64(), line));
                }
            }
            lines
        });
        self.running = Some(Running { child, reader });
        Ok(())
    }

    fn stop(&mut self, _ctx: &RunContext) -> Result<MeasureSet, ProfilerError> {
        let Running { mut child, reader } = self
            .running
            .take()
            .ok_or_else(|| self.failed("stop without start"))?;
        let exited = child.try_wait().map_err(|e| self.failed(e.to_string()))?;
        match exited {
            Some(status) if !status.success() => {
                let _ = reader.join();
                return Err(self.failed(format!(
                    "command exited with status {}",
                    shell::exit_code(status)
                )));
            }
            Some(_) => {}
            None => {
                shell::signal_group(child.id(), libc::SIGTERM);
                let deadline = Instant::now() + self.stop_timeout;
                while child
                    .try_wait()
                    .map_err(|e| self.failed(e.to_string()))?
                    .is_none()
                {
                    if Instant::now() >= deadline {
                        shell::signal_group(child.id(), libc::SIGKILL);
                        child.wait().map_err(|e| self.failed(e.to_string()))?;
                        break;
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
            }
        }
        let lines = reader
            .join()
            .map_err(|_| self.failed("output reader panicked"))?;
        let declared: BTreeSet<&str> = self.metrics.iter().map(String::as_str).collect();
        let mut set = MeasureSet::new();
        for (t, line) in &lines {
            if let Some((name, value)) = parse_line(line) {
                let metric = self.rename.get(name).map(String::as_str).unwrap_or(name);
                if declared.contains(metric) {
                    set.push(*t, metric, value);
                }
            }
        }
        if let Some(missing) = self.metrics.iter().find(|m| !set.has(m)) {
            return Err(self.failed(format!("command reported no `{missing}` value")));
        }
        Ok(set)
    }
}
