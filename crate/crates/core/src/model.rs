//! Experiment definitions: the declarative document, its parsing, and validation.
//!
//! A definition is immutable once parsed. Parsing checks syntax, the schema
//! (unknown keys are rejected), and name references; [`validate`] checks the
//! remaining invariants and reports them as findings rather than failures.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-run timeout applied when a subject does not declare one.
pub const DEFAULT_TIMEOUT_S: f64 = 600.0;
/// Pause between consecutive runs when the document does not set `cooldown_s`.
pub const DEFAULT_COOLDOWN_S: f64 = 30.0;

/// Placeholders every subject command may use regardless of factors.
pub const BUILTIN_VARIABLES: &[&str] = &["run_id", "subject", "repetition", "output_dir"];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown field at line {line}, column {column}: {message}")]
    UnknownField {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("reference error: {0}")]
    Reference(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GqmGoal {
    pub goal: String,
    pub questions: Vec<String>,
    #[serde(default)]
    pub metrics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Main,
    CoFactor,
    Blocking,
    /// Documentation-only factor held at a single treatment; never expanded.
    Fixed,
}

impl FactorKind {
    /// Whether the factor multiplies the run table.
    pub fn expands(self) -> bool {
        !matches!(self, FactorKind::Fixed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Treatment {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Factor {
    pub name: String,
    pub kind: FactorKind,
    pub treatments: Vec<Treatment>,
}

impl Factor {
    pub fn treatment(&self, name: &str) -> Option<&Treatment> {
        self.treatments.iter().find(|t| t.name == name)
    }
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_S
}

fn default_dir() -> PathBuf {
    PathBuf::from(".")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subject {
    pub name: String,
    /// Shell command with `{param}` placeholders.
    pub command: String,
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
}

impl Subject {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s.max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Joule,
    Watt,
    Second,
    Percent,
    Byte,
    Count,
    Custom(String),
}

impl Unit {
    /// Default collapse of per-sample values: energies and counts add up,
    /// rates and utilizations average.
    pub fn default_aggregation(&self) -> Aggregation {
        match self {
            Unit::Joule | Unit::Second | Unit::Byte | Unit::Count => Aggregation::Sum,
            Unit::Watt | Unit::Percent => Aggregation::Mean,
            Unit::Custom(_) => Aggregation::Last,
        }
    }

    pub fn symbol(&self) -> &str {
        match self {
            Unit::Joule => "J",
            Unit::Watt => "W",
            Unit::Second => "s",
            Unit::Percent => "%",
            Unit::Byte => "B",
            Unit::Count => "",
            Unit::Custom(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    Mean,
    Max,
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricRole {
    #[default]
    Dependent,
    Diagnostic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetricSpec {
    name: String,
    unit: Unit,
    #[serde(default)]
    aggregation: Option<Aggregation>,
    #[serde(default)]
    role: MetricRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawMetricSpec")]
pub struct MetricSpec {
    pub name: String,
    pub unit: Unit,
    pub aggregation: Aggregation,
    pub role: MetricRole,
}

impl From<RawMetricSpec> for MetricSpec {
    fn from(raw: RawMetricSpec) -> Self {
        let aggregation = raw
            .aggregation
            .unwrap_or_else(|| raw.unit.default_aggregation());
        MetricSpec {
            name: raw.name,
            unit: raw.unit,
            aggregation,
            role: raw.role,
        }
    }
}

impl MetricSpec {
    pub fn new(name: impl Into<String>, unit: Unit) -> Self {
        let aggregation = unit.default_aggregation();
        MetricSpec {
            name: name.into(),
            unit,
            aggregation,
            role: MetricRole::Dependent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    TwoSided,
    ALess,
    AGreater,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hypothesis {
    pub id: String,
    pub metric: String,
    pub factor: String,
    pub treatment_a: String,
    pub treatment_b: String,
    #[serde(default)]
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Automatic,
    SemiAutomatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilerConfig {
    pub name: String,
    #[serde(default)]
    pub settings: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HookEvent {
    BeforeExperiment,
    BeforeRun,
    StartMeasurement,
    Interact,
    StopMeasurement,
    AfterRun,
    AfterExperiment,
}

impl HookEvent {
    pub const ALL: [HookEvent; 7] = [
        HookEvent::BeforeExperiment,
        HookEvent::BeforeRun,
        HookEvent::StartMeasurement,
        HookEvent::Interact,
        HookEvent::StopMeasurement,
        HookEvent::AfterRun,
        HookEvent::AfterExperiment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HookEvent::BeforeExperiment => "before_experiment",
            HookEvent::BeforeRun => "before_run",
            HookEvent::StartMeasurement => "start_measurement",
            HookEvent::Interact => "interact",
            HookEvent::StopMeasurement => "stop_measurement",
            HookEvent::AfterRun => "after_run",
            HookEvent::AfterExperiment => "after_experiment",
        }
    }
}

impl fmt::Display for HookEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_max_retries() -> u32 {
    1
}
fn default_max_failed_fraction() -> f64 {
    0.2
}
fn default_alpha() -> f64 {
    0.05
}
fn default_budget_h() -> f64 {
    40.0
}

/// Failure handling, significance level, and the duration budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Abort once failed runs exceed this fraction of the table.
    #[serde(default = "default_max_failed_fraction")]
    pub max_failed_fraction: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_budget_h")]
    pub budget_h: f64,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            max_retries: default_max_retries(),
            max_failed_fraction: default_max_failed_fraction(),
            alpha: default_alpha(),
            budget_h: default_budget_h(),
        }
    }
}

fn default_cooldown() -> f64 {
    DEFAULT_COOLDOWN_S
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDefinition {
    pub name: String,
    pub gqm: GqmGoal,
    pub factors: Vec<Factor>,
    pub subjects: Vec<Subject>,
    pub metrics: Vec<MetricSpec>,
    #[serde(default)]
    pub hypotheses: Vec<Hypothesis>,
    pub repetitions: u32,
    #[serde(default = "default_cooldown")]
    pub cooldown_s: f64,
    /// Expected wall time of one run; falls back to the largest subject timeout.
    #[serde(default)]
    pub estimated_run_time_s: Option<f64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub profilers: Vec<ProfilerConfig>,
    #[serde(default)]
    pub hooks: BTreeMap<HookEvent, PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub policy: Policy,
}

impl ExperimentDefinition {
    pub fn factor(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub fn metric(&self, name: &str) -> Option<&MetricSpec> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn subject(&self, name: &str) -> Option<&Subject> {
        self.subjects.iter().find(|s| s.name == name)
    }

    /// Factors that multiply the run table, in declaration order.
    pub fn expanding_factors(&self) -> impl Iterator<Item = &Factor> {
        self.factors.iter().filter(|f| f.kind.expands())
    }

    pub fn blocking_factor(&self) -> Option<&Factor> {
        self.factors.iter().find(|f| f.kind == FactorKind::Blocking)
    }

    pub fn dependent_metrics(&self) -> impl Iterator<Item = &MetricSpec> {
        self.metrics
            .iter()
            .filter(|m| m.role == MetricRole::Dependent)
    }

    pub fn cooldown(&self) -> Duration {
        Duration::from_secs_f64(self.cooldown_s.max(0.0))
    }

    pub fn per_run_estimate(&self) -> Duration {
        let secs = self.estimated_run_time_s.unwrap_or_else(|| {
            self.subjects
                .iter()
                .map(|s| s.timeout_s)
                .fold(0.0, f64::max)
        });
        Duration::from_secs_f64(secs.max(0.0))
    }

    pub fn budget(&self) -> Duration {
        Duration::from_secs_f64(self.policy.budget_h.max(0.0) * 3600.0)
    }

    /// Number of distinct trials (subject × expanding-treatment combination).
    pub fn trial_count(&self) -> u128 {
        self.expanding_factors()
            .map(|f| f.treatments.len() as u128)
            .product::<u128>()
            * self.subjects.len() as u128
    }

    /// Rewrites relative paths (subject dirs, hooks, output dir) against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &PathBuf| {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };
        self.output_dir = join(&self.output_dir);
        for s in &mut self.subjects {
            s.dir = join(&s.dir);
        }
        for path in self.hooks.values_mut() {
            *path = join(path);
        }
    }
}

fn from_json_error(err: serde_json::Error) -> ModelError {
    use serde_json::error::Category;
    let (line, column) = (err.line(), err.column());
    let message = err.to_string();
    match err.classify() {
        Category::Syntax | Category::Eof | Category::Io => ModelError::Syntax {
            line,
            column,
            message,
        },
        Category::Data if message.starts_with("unknown field") => ModelError::UnknownField {
            line,
            column,
            message,
        },
        Category::Data => ModelError::Schema {
            line,
            column,
            message,
        },
    }
}

/// Parses a JSON experiment document and applies defaults.
///
/// Name references (hypotheses and GQM metrics) must resolve; the remaining
/// invariants are left to [`validate`].
pub fn parse_definition(document: &str) -> Result<ExperimentDefinition, ModelError> {
    let def: ExperimentDefinition = serde_json::from_str(document).map_err(from_json_error)?;
    check_references(&def)?;
    Ok(def)
}

/// Reads and parses a document, resolving relative paths against its directory.
pub fn load_definition(path: &Path) -> Result<ExperimentDefinition, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut def = parse_definition(&text)?;
    let base = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    def.resolve_paths(base);
    Ok(def)
}

/// Canonical JSON rendering with sorted keys; byte-stable for equal definitions.
pub fn serialize_definition(def: &ExperimentDefinition) -> String {
    let value = serde_json::to_value(def).expect("definition is always representable as JSON");
    let mut out = serde_json::to_string_pretty(&value).expect("JSON value serializes");
    out.push('\n');
    out
}

/// Checks that every hypothesis and GQM metric names something that exists.
pub fn check_references(def: &ExperimentDefinition) -> Result<(), ModelError> {
    for m in &def.gqm.metrics {
        if def.metric(m).is_none() {
            return Err(ModelError::Reference(format!(
                "gqm metric `{m}` is not defined in metrics"
            )));
        }
    }
    for h in &def.hypotheses {
        if def.metric(&h.metric).is_none() {
            return Err(ModelError::Reference(format!(
                "hypothesis `{}` names missing metric `{}`",
                h.id, h.metric
            )));
        }
        let factor = def.factor(&h.factor).ok_or_else(|| {
            ModelError::Reference(format!(
                "hypothesis `{}` names missing factor `{}`",
                h.id, h.factor
            ))
        })?;
        for t in [&h.treatment_a, &h.treatment_b] {
            if factor.treatment(t).is_none() {
                return Err(ModelError::Reference(format!(
                    "hypothesis `{}` names missing treatment `{t}` of factor `{}`",
                    h.id, h.factor
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    fn error(&mut self, message: impl Into<String>) {
        self.findings.push(Finding {
            severity: Severity::Error,
            message: message.into(),
        });
    }

    fn warn(&mut self, message: impl Into<String>) {
        self.findings.push(Finding {
            severity: Severity::Warning,
            message: message.into(),
        });
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
    }

    pub fn is_ok(&self) -> bool {
        self.errors().next().is_none()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            let tag = match finding.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "{tag}: {}", finding.message)?;
        }
        Ok(())
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

/// `{name}` placeholders in a command template, in order of appearance.
pub fn placeholders(template: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                if is_identifier(name) {
                    out.push(name.to_string());
                }
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
    out
}

/// Substitutes `{name}` placeholders; unknown names are reported as `Err(name)`.
pub fn substitute(template: &str, vars: &BTreeMap<String, String>) -> Result<String, String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_identifier(&after[..close]) => {
                let name = &after[..close];
                let value = vars.get(name).ok_or_else(|| name.to_string())?;
                out.push_str(value);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Checks every invariant of a parsed definition.
pub fn validate(def: &ExperimentDefinition) -> ValidationReport {
    let mut report = ValidationReport::default();

    if !is_identifier(&def.name) {
        report.error(format!(
            "experiment name `{}` is not an identifier",
            def.name
        ));
    }
    if def.gqm.goal.trim().is_empty() {
        report.error("gqm.goal must not be empty");
    }
    if def.gqm.questions.is_empty() {
        report.error("gqm.questions must list at least one research question");
    }
    if let Err(e) = check_references(def) {
        report.error(e.to_string());
    }
    if def.repetitions < 1 {
        report.error("repetitions must be ≥ 1");
    }
    if def.cooldown_s.is_nan() || def.cooldown_s < 0.0 {
        report.error("cooldown_s must be ≥ 0");
    }
    if let Some(t) = def.estimated_run_time_s {
        if t.is_nan() || t <= 0.0 {
            report.error("estimated_run_time_s must be > 0");
        }
    } else {
        report.warn(
            "estimated_run_time_s not set; duration estimates use the largest subject timeout",
        );
    }
    if !(def.policy.alpha > 0.0 && def.policy.alpha < 1.0) {
        report.error("policy.alpha must lie in (0, 1)");
    }
    if !(0.0..=1.0).contains(&def.policy.max_failed_fraction) {
        report.error("policy.max_failed_fraction must lie in [0, 1]");
    }

    // factors
    let mut factor_names = BTreeSet::new();
    for f in &def.factors {
        if !factor_names.insert(f.name.as_str()) {
            report.error(format!("duplicate factor name `{}`", f.name));
        }
        if !is_identifier(&f.name) {
            report.error(format!("factor name `{}` is not an identifier", f.name));
        }
        if f.treatments.is_empty() {
            report.error(format!("factor `{}` has no treatments", f.name));
        }
        if f.kind == FactorKind::Fixed && f.treatments.len() != 1 {
            report.error(format!(
                "fixed factor `{}` must have exactly one treatment",
                f.name
            ));
        }
        let mut seen = BTreeSet::new();
        for t in &f.treatments {
            if t.name.is_empty() {
                report.error(format!(
                    "factor `{}` has a treatment with an empty name",
                    f.name
                ));
            } else if !is_identifier(&t.name) {
                report.error(format!(
                    "treatment `{}` of factor `{}` is not an identifier",
                    t.name, f.name
                ));
            }
            if !seen.insert(t.name.as_str()) {
                report.error(format!(
                    "duplicate treatment `{}` in factor `{}`",
                    t.name, f.name
                ));
            }
            for key in t.params.keys() {
                if !is_identifier(key) {
                    report.error(format!(
                        "parameter key `{key}` of treatment `{}` is not an identifier",
                        t.name
                    ));
                }
            }
        }
    }
    if !def.factors.iter().any(|f| f.kind == FactorKind::Main) {
        report.error("at least one factor of kind `main` is required");
    }
    let blocking = def
        .factors
        .iter()
        .filter(|f| f.kind == FactorKind::Blocking)
        .count();
    if blocking > 1 {
        report.error(format!(
            "at most one blocking factor is allowed, found {blocking}"
        ));
    }

    // parameter keys must come from a single factor
    let mut key_owner: BTreeMap<&str, &str> = BTreeMap::new();
    for f in &def.factors {
        let keys: BTreeSet<&str> = f
            .treatments
            .iter()
            .flat_map(|t| t.params.keys().map(String::as_str))
            .collect();
        for key in keys {
            if BUILTIN_VARIABLES.contains(&key) {
                report.error(format!(
                    "parameter `{key}` of factor `{}` shadows a built-in variable",
                    f.name
                ));
            }
            if let Some(owner) = key_owner.insert(key, &f.name) {
                report.error(format!(
                    "parameter `{key}` is defined by both factors `{owner}` and `{}`",
                    f.name
                ));
            }
        }
    }

    // subjects
    if def.subjects.is_empty() {
        report.error("subjects: at least one subject is required");
    }
    let mut subject_names = BTreeSet::new();
    let known: BTreeSet<&str> = key_owner
        .keys()
        .copied()
        .chain(BUILTIN_VARIABLES.iter().copied())
        .collect();
    for s in &def.subjects {
        if !subject_names.insert(s.name.as_str()) {
            report.error(format!("duplicate subject name `{}`", s.name));
        }
        if !is_identifier(&s.name) {
            report.error(format!("subject name `{}` is not an identifier", s.name));
        }
        if s.timeout_s.is_nan() || s.timeout_s <= 0.0 {
            report.error(format!("subject `{}` timeout_s must be > 0", s.name));
        }
        if s.command.trim().is_empty() {
            report.error(format!("subject `{}` has an empty command", s.name));
        }
        for p in placeholders(&s.command) {
            if !known.contains(p.as_str()) {
                report.error(format!(
                    "subject `{}` placeholder `{{{p}}}` resolves from no treatment parameter or built-in",
                    s.name
                ));
            }
        }
    }

    // metrics
    let mut metric_names = BTreeSet::new();
    for m in &def.metrics {
        if !metric_names.insert(m.name.as_str()) {
            report.error(format!("duplicate metric name `{}`", m.name));
        }
        if !is_identifier(&m.name) {
            report.error(format!("metric name `{}` is not an identifier", m.name));
        }
    }
    if def.dependent_metrics().next().is_none() {
        report.warn("no dependent metric is defined");
    }

    // hypotheses
    let mut hyp_ids = BTreeSet::new();
    for h in &def.hypotheses {
        if !hyp_ids.insert(h.id.as_str()) {
            report.error(format!("duplicate hypothesis id `{}`", h.id));
        }
        if h.treatment_a == h.treatment_b {
            report.error(format!(
                "hypothesis `{}` compares treatment `{}` with itself",
                h.id, h.treatment_a
            ));
        }
        if let Some(f) = def.factor(&h.factor) {
            if f.kind == FactorKind::Fixed {
                report.error(format!(
                    "hypothesis `{}` compares levels of fixed factor `{}`",
                    h.id, h.factor
                ));
            }
        }
    }
    if def.hypotheses.len() > 5 {
        report.warn(format!(
            "{} hypotheses are tested without multiple-comparison correction",
            def.hypotheses.len()
        ));
    }

    // profilers
    let mut profiler_names = BTreeSet::new();
    for p in &def.profilers {
        if !profiler_names.insert(p.name.as_str()) {
            report.error(format!("duplicate profiler `{}`", p.name));
        }
    }

    report
}
