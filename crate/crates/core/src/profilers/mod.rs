//! Measurement plugins.
//!
//! A profiler is started before the subject launches and stopped after it
//! exits; `stop` hands back everything it measured as a [`MeasureSet`].
//! Sampler-style plugins run one background thread per run and buffer their
//! samples locally until `stop` joins the thread.

mod external;
mod process;
mod rapl;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Aggregation, ExperimentDefinition, MetricSpec, ProfilerConfig};

pub use external::ExternalCommandProfiler;
pub use process::ProcessSampler;
pub use rapl::{
    read_energy_delta, set_mock_energy, write_mock_domain, EnergyCounterSource, RaplProfiler,
};
pub use synthetic::SyntheticProfiler;

/// Period used by sampler-style plugins unless configured otherwise.
pub const DEFAULT_SAMPLE_PERIOD: Duration = Duration::from_millis(100);

/// Upper bound on samples a background sampler buffers for one run.
pub const SAMPLE_BUFFER_CAP: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum ProfilerError {
    #[error("profiler `{profiler}`: invalid setting `{key}`: {message}")]
    Setting {
        profiler: String,
        key: String,
        message: String,
    },
    #[error("unknown profiler `{0}`")]
    Unknown(String),
    #[error("profiler `{profiler}` is not ready: {message}")]
    NotReady { profiler: String, message: String },
    #[error("profiler `{profiler}` failed: {message}")]
    Failed { profiler: String, message: String },
    #[error("raw counter reading {raw} is outside [0, {range})")]
    CounterDomain { raw: u64, range: u64 },
    #[error("metric `{0}` has no samples")]
    MissingMetric(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Seconds since the run started.
    pub t: f64,
    pub metric: String,
    pub value: f64,
}

/// The named values one profiler produced for one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureSet {
    samples: Vec<Sample>,
}

impl MeasureSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a sample; non-finite values are dropped and timestamps are
    /// clamped so the sequence stays non-decreasing.
    pub fn push(&mut self, t: f64, metric: impl Into<String>, value: f64) {
        if !value.is_finite() {
            return;
        }
        let last = self.samples.last().map(|s| s.t).unwrap_or(0.0);
        let t = if t.is_finite() { t.max(last) } else { last };
        self.samples.push(Sample {
            t,
            metric: metric.into(),
            value,
        });
    }

    /// A single counter-style total.
    pub fn total(metric: impl Into<String>, value: f64) -> Self {
        let mut set = Self::new();
        set.push(0.0, metric, value);
        set
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn values_of<'a>(&'a self, metric: &'a str) -> impl Iterator<Item = f64> + 'a {
        self.samples
            .iter()
            .filter(move |s| s.metric == metric)
            .map(|s| s.value)
    }

    pub fn has(&self, metric: &str) -> bool {
        self.samples.iter().any(|s| s.metric == metric)
    }

    pub fn extend(&mut self, other: MeasureSet) {
        for s in other.samples {
            self.push(s.t, s.metric, s.value);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Collapses a metric's samples to one per-run value.
pub fn aggregate(measures: &MeasureSet, spec: &MetricSpec) -> Result<f64, ProfilerError> {
    let values: Vec<f64> = measures.values_of(&spec.name).collect();
    if values.is_empty() {
        return Err(ProfilerError::MissingMetric(spec.name.clone()));
    }
    Ok(match spec.aggregation {
        Aggregation::Sum => values.iter().sum(),
        Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregation::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregation::Last => *values.last().unwrap(),
    })
}

/// What a profiler knows about the run it measures.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub run_id: String,
    pub subject: String,
    pub repetition: u32,
    pub treatments: Vec<(String, String)>,
    /// Merged treatment parameters plus built-in variables.
    pub vars: BTreeMap<String, String>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub started: Instant,
}

impl RunContext {
    /// Environment handed to hooks, subjects, and external profilers.
    pub fn env(&self, event: &str) -> Vec<(String, String)> {
        let mut env = vec![
            ("EXR_RUN_ID".to_string(), self.run_id.clone()),
            ("EXR_SUBJECT".to_string(), self.subject.clone()),
            ("EXR_REPETITION".to_string(), self.repetition.to_string()),
            (
                "EXR_OUTPUT_DIR".to_string(),
                self.output_dir.display().to_string(),
            ),
            ("EXR_EVENT".to_string(), event.to_string()),
        ];
        for (factor, treatment) in &self.treatments {
            env.push((treatment_env_name(factor), treatment.clone()));
        }
        env
    }
}

/// `EXR_TREATMENT_<FACTOR>` with the factor name uppercased.
pub fn treatment_env_name(factor: &str) -> String {
    let upper: String = factor
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("EXR_TREATMENT_{upper}")
}

/// The measurement plugin contract.
pub trait Profiler: Send {
    fn name(&self) -> &str;

    /// Metric names this plugin produces on every successful run.
    fn declared_metrics(&self) -> Vec<String>;

    /// Diagnostic probe run before the experiment starts.
    fn check_ready(&self) -> Result<(), ProfilerError> {
        Ok(())
    }

    fn start(&mut self, ctx: &RunContext) -> Result<(), ProfilerError>;

    /// Called once the subject process exists.
    fn subject_started(&mut self, _pid: u32) {}

    fn stop(&mut self, ctx: &RunContext) -> Result<MeasureSet, ProfilerError>;
}

impl fmt::Debug for dyn Profiler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Profiler")
            .field("name", &self.name())
            .field("declared_metrics", &self.declared_metrics())
            .finish()
    }
}

pub type Settings = BTreeMap<String, serde_json::Value>;
pub type ProfilerFactory =
    Arc<dyn Fn(&ProfilerConfig) -> Result<Box<dyn Profiler>, ProfilerError> + Send + Sync>;

/// Maps profiler names in experiment documents to constructors.
#[derive(Clone)]
pub struct ProfilerRegistry {
    factories: BTreeMap<String, ProfilerFactory>,
}

impl Default for ProfilerRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl ProfilerRegistry {
    pub fn empty() -> Self {
        ProfilerRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// `synthetic`, `rapl`, `external`, and `process`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("synthetic", |c| {
            Ok(Box::new(SyntheticProfiler::from_settings(
                &c.name,
                &c.settings,
            )?))
        });
        reg.register("rapl", |c| {
            Ok(Box::new(RaplProfiler::from_settings(&c.name, &c.settings)?))
        });
        reg.register("external", |c| {
            Ok(Box::new(ExternalCommandProfiler::from_settings(
                &c.name,
                &c.settings,
            )?))
        });
        reg.register("process", |c| {
            Ok(Box::new(ProcessSampler::from_settings(
                &c.name,
                &c.settings,
            )?))
        });
        reg
    }

    pub fn register<F>(&mut self, kind: &str, factory: F)
    where
        F: Fn(&ProfilerConfig) -> Result<Box<dyn Profiler>, ProfilerError> + Send + Sync + 'static,
    {
        self.factories.insert(kind.to_string(), Arc::new(factory));
    }

    /// The plugin kind is the `kind` setting when present, else the profiler name.
    pub fn build(&self, config: &ProfilerConfig) -> Result<Box<dyn Profiler>, ProfilerError> {
        let kind = config
            .settings
            .get("kind")
            .and_then(|v| v.as_str())
            .unwrap_or(&config.name);
        let factory = self
            .factories
            .get(kind)
            .ok_or_else(|| ProfilerError::Unknown(kind.to_string()))?;
        factory(config)
    }

    pub fn build_all(
        &self,
        def: &ExperimentDefinition,
    ) -> Result<Vec<Box<dyn Profiler>>, ProfilerError> {
        def.profilers.iter().map(|c| self.build(c)).collect()
    }
}

// settings helpers shared by the built-in plugins

pub(crate) fn setting_str(settings: &Settings, key: &str) -> Option<String> {
    settings.get(key).map(|v| match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    })
}

pub(crate) fn setting_f64(
    profiler: &str,
    settings: &Settings,
    key: &str,
    default: f64,
) -> Result<f64, ProfilerError> {
    match settings.get(key) {
        None => Ok(default),
        Some(serde_json::Value::Number(n)) => Ok(n.as_f64().unwrap_or(default)),
        Some(serde_json::Value::String(s)) => {
            s.trim().parse().map_err(|_| ProfilerError::Setting {
                profiler: profiler.to_string(),
                key: key.to_string(),
                message: format!("`{s}` is not a number"),
            })
        }
        Some(other) => Err(ProfilerError::Setting {
            profiler: profiler.to_string(),
            key: key.to_string(),
            message: format!("expected a number, got {other}"),
        }),
    }
}

pub(crate) fn sample_period(
    profiler: &str,
    settings: &Settings,
) -> Result<Duration, ProfilerError> {
    let ms = setting_f64(
        profiler,
        settings,
        "sample_period_ms",
        DEFAULT_SAMPLE_PERIOD.as_secs_f64() * 1000.0,
    )?;
    if ms.is_nan() || ms < 0.0 {
        return Err(ProfilerError::Setting {
            profiler: profiler.to_string(),
            key: "sample_period_ms".into(),
            message: "must be ≥ 0".into(),
        });
    }
    Ok(Duration::from_secs_f64(ms / 1000.0))
}
