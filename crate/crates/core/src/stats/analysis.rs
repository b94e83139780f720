use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::{
    cliffs_delta, cohens_d, descriptive, mann_whitney, shapiro_wilk, spearman, welch_t,
    Descriptive, EffectSize, StatsError, TestResult,
};
use crate::design::{RunStatus, RunTable};
use crate::model::{Direction, ExperimentDefinition, MetricRole, Unit};

/// Above this many hypotheses the report warns about multiple comparisons.
pub const MANY_HYPOTHESES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveRow {
    pub metric: String,
    /// Trial key, or `all`.
    pub group: String,
    pub stats: Descriptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityCheck {
    pub treatment: String,
    pub w: Option<f64>,
    pub p: Option<f64>,
    pub normal: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub id: String,
    pub metric: String,
    pub factor: String,
    pub treatment_a: String,
    pub treatment_b: String,
    pub direction: Direction,
    pub descriptive_a: Descriptive,
    pub descriptive_b: Descriptive,
    pub normality: [NormalityCheck; 2],
    pub test: TestResult,
    /// Effect size paired with the chosen test.
    pub effect: EffectSize,
    /// Reported for every hypothesis regardless of the branch taken.
    pub cliffs_delta: EffectSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub metric_x: String,
    pub metric_y: String,
    pub n: usize,
    pub rho: Option<f64>,
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SanityFlag {
    NegativeEnergy {
        run_id: String,
        metric: String,
        value: f64,
    },
    MissingCell {
        run_id: String,
        metric: String,
    },
    FailedRuns {
        count: usize,
    },
    PendingRuns {
        count: usize,
    },
    ManyHypotheses {
        count: usize,
    },
}

impl fmt::Display for SanityFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SanityFlag::NegativeEnergy {
                run_id,
                metric,
                value,
            } => {
                write!(f, "negative energy in {run_id}: {metric} = {value}")
            }
            SanityFlag::MissingCell { run_id, metric } => {
                write!(f, "completed run {run_id} has no value for {metric}")
            }
            SanityFlag::FailedRuns { count } => write!(f, "{count} run(s) failed"),
            SanityFlag::PendingRuns { count } => write!(f, "{count} run(s) never executed"),
            SanityFlag::ManyHypotheses { count } => write!(
                f,
                "{count} hypotheses tested without multiple-comparison correction"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub experiment: String,
    pub alpha: f64,
    pub total_runs: usize,
    pub done_runs: usize,
    pub descriptives: Vec<DescriptiveRow>,
    pub hypotheses: Vec<HypothesisResult>,
    pub correlations: Vec<Correlation>,
    pub flags: Vec<SanityFlag>,
}

impl AnalysisReport {
    pub fn hypothesis(&self, id: &str) -> Option<&HypothesisResult> {
        self.hypotheses.iter().find(|h| h.id == id)
    }
}

fn normality(treatment: &str, values: &[f64], alpha: f64) -> NormalityCheck {
    match shapiro_wilk(values) {
        Ok((w, p)) => NormalityCheck {
            treatment: treatment.to_string(),
            w: Some(w),
            p: Some(p),
            normal: p >= alpha,
            note: None,
        },
        Err(e) => NormalityCheck {
            treatment: treatment.to_string(),
            w: None,
            p: None,
            normal: false,
            note: Some(format!("not assessed: {e}")),
        },
    }
}

/// Runs every hypothesis of `def` against the completed runs of `table`.
///
/// Both groups normal at α selects Welch's t with Cohen's d; otherwise
/// Mann–Whitney U with Cliff's delta.
pub fn analyze(def: &ExperimentDefinition, table: &RunTable) -> Result<AnalysisReport, StatsError> {
    let alpha = def.policy.alpha;
    let done: Vec<_> = table
        .runs
        .iter()
        .filter(|r| r.status == RunStatus::Done)
        .collect();
    if done.is_empty() {
        return Err(StatsError::NoCompletedRuns);
    }

    let mut flags = Vec::new();
    for run in &done {
        for spec in &def.metrics {
            match run.measures.get(&spec.name) {
                Some(&v) if v < 0.0 && spec.unit == Unit::Joule => {
                    flags.push(SanityFlag::NegativeEnergy {
                        run_id: run.run_id.clone(),
                        metric: spec.name.clone(),
                        value: v,
                    })
                }
                None if spec.role == MetricRole::Dependent => flags.push(SanityFlag::MissingCell {
                    run_id: run.run_id.clone(),
                    metric: spec.name.clone(),
                }),
                _ => {}
            }
        }
    }
    let count = |s: RunStatus| table.runs.iter().filter(|r| r.status == s).count();
    if count(RunStatus::Failed) > 0 {
        flags.push(SanityFlag::FailedRuns {
            count: count(RunStatus::Failed),
        });
    }
    if count(RunStatus::Pending) > 0 {
        flags.push(SanityFlag::PendingRuns {
            count: count(RunStatus::Pending),
        });
    }
    if def.hypotheses.len() > MANY_HYPOTHESES {
        flags.push(SanityFlag::ManyHypotheses {
            count: def.hypotheses.len(),
        });
    }

    let mut descriptives = Vec::new();
    for spec in &def.metrics {
        let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut all = Vec::new();
        for run in &done {
            if let Some(&v) = run.measures.get(&spec.name) {
                groups.entry(run.trial_key.as_str()).or_default().push(v);
                all.push(v);
            }
        }
        for (group, values) in groups {
            descriptives.push(DescriptiveRow {
                metric: spec.name.clone(),
                group: group.to_string(),
                stats: descriptive(&values)?,
            });
        }
        if let Ok(stats) = descriptive(&all) {
            descriptives.push(DescriptiveRow {
                metric: spec.name.clone(),
                group: "all".into(),
                stats,
            });
        }
    }

    let mut hypotheses = Vec::new();
    for h in &def.hypotheses {
        let group = |treatment: &str| -> Result<Vec<f64>, StatsError> {
            let values: Vec<f64> = done
                .iter()
                .filter(|r| r.treatment_of(&h.factor) == Some(treatment))
                .filter_map(|r| r.measures.get(&h.metric).copied())
                .collect();
            if values.len() < 2 {
                return Err(StatsError::InsufficientData {
                    hypothesis: h.id.clone(),
                    treatment: treatment.to_string(),
                    metric: h.metric.clone(),
                    n: values.len(),
                });
            }
            Ok(values)
        };
        let a = group(&h.treatment_a)?;
        let b = group(&h.treatment_b)?;
        let norm = [
            normality(&h.treatment_a, &a, alpha),
            normality(&h.treatment_b, &b, alpha),
        ];
        let delta = cliffs_delta(&a, &b)?;
        let parametric = if norm.iter().all(|n| n.normal) {
            welch_t(&a, &b, h.direction, alpha)
                .and_then(|t| Ok((t, cohens_d(&a, &b)?)))
                .ok()
        } else {
            None
        };
        let (test, effect) = match parametric {
            Some(pair) => pair,
            None => (mann_whitney(&a, &b, h.direction, alpha)?, delta),
        };
        hypotheses.push(HypothesisResult {
            id: h.id.clone(),
            metric: h.metric.clone(),
            factor: h.factor.clone(),
            treatment_a: h.treatment_a.clone(),
            treatment_b: h.treatment_b.clone(),
            direction: h.direction,
            descriptive_a: descriptive(&a)?,
            descriptive_b: descriptive(&b)?,
            normality: norm,
            test,
            effect,
            cliffs_delta: delta,
        });
    }

    let dependent: Vec<&str> = def.dependent_metrics().map(|m| m.name.as_str()).collect();
    let mut correlations = Vec::new();
    for (i, x) in dependent.iter().enumerate() {
        for y in &dependent[i + 1..] {
            let (xs, ys): (Vec<f64>, Vec<f64>) = done
                .iter()
                .filter_map(|r| Some((*r.measures.get(*x)?, *r.measures.get(*y)?)))
                .unzip();
            let (rho, p, note) = match spearman(&xs, &ys) {
                Ok((rho, p)) => (Some(rho), Some(p), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            correlations.push(Correlation {
                metric_x: x.to_string(),
                metric_y: y.to_string(),
                n: xs.len(),
                rho,
                p,
                note,
            });
        }
    }

    Ok(AnalysisReport {
        experiment: def.name.clone(),
        alpha,
        total_runs: table.len(),
        done_runs: done.len(),
        descriptives,
        hypotheses,
        correlations,
        flags,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

pub(crate) fn fmt_p(p: f64) -> String {
    if p != 0.0 && p < 1e-4 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

fn direction_text(d: Direction) -> &'static str {
    match d {
        Direction::TwoSided => "two-sided",
        Direction::ALess => "A < B",
        Direction::AGreater => "A > B",
    }
}

impl HypothesisResult {
    /// One-paragraph markdown summary.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "**{}**: `{}` under `{}`, A = `{}` vs B = `{}` ({})\n",
            self.id,
            self.metric,
            self.factor,
            self.treatment_a,
            self.treatment_b,
            direction_text(self.direction)
        );
        let _ = writeln!(s, "| group | n | mean | sd | median | Shapiro–Wilk W | p |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|");
        for (d, n) in [
            (&self.descriptive_a, &self.normality[0]),
            (&self.descriptive_b, &self.normality[1]),
        ] {
            let _ = writeln!(
                s,
                "| {} | {} | {:.4} | {} | {:.4} | {} | {} |",
                n.treatment,
                d.n,
                d.mean,
                opt(d.sd),
                d.median,
                opt(n.w),
                opt(n.p)
            );
        }
        let df = self
            .test
            .df
            .map(|d| format!(", df = {d:.2}"))
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "\n- test: {} (statistic = {:.4}{df}, p = {})",
            self.test.test_name,
            self.test.statistic,
            fmt_p(self.test.p_value)
        );
        let _ = writeln!(s, "- effect size: {}", self.effect);
        if self.effect.method != self.cliffs_delta.method {
            let _ = writeln!(s, "- also: {}", self.cliffs_delta);
        }
        let _ = writeln!(
            s,
            "- verdict at α = {}: **{}** the null hypothesis",
            self.test.alpha, self.test.decision
        );
        s
    }
}

impl AnalysisReport {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Analysis: {}\n", self.experiment);
        let _ = writeln!(
            s,
            "{} of {} runs completed; α = {}.\n",
            self.done_runs, self.total_runs, self.alpha
        );
        s.push_str(&self.descriptive_markdown());
        let _ = writeln!(s, "## Hypotheses\n");
        if self.hypotheses.is_empty() {
            let _ = writeln!(s, "No hypotheses defined.\n");
        }
        for h in &self.hypotheses {
            s.push_str(&h.to_markdown());
            s.push('\n');
        }
        s.push_str(&self.correlation_markdown());
        s.push_str(&self.flags_markdown());
        s
    }

    pub fn descriptive_markdown(&self) -> String {
        let mut s = String::from("## Descriptive statistics\n\n");
        let mut metrics: Vec<&str> = self
            .descriptives
            .iter()
            .map(|d| d.metric.as_str())
            .collect();
        metrics.dedup();
        for m in metrics {
            let _ = writeln!(s, "### {m}\n");
            let _ = writeln!(
                s,
                "| group | n | mean | sd | median | q1 | q3 | min | max | cv |"
            );
            let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|---|");
            for row in self.descriptives.iter().filter(|d| d.metric == m) {
                let d = &row.stats;
                let _ = writeln!(
                    s,
                    "| {} | {} | {:.4} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {} |",
                    row.group,
                    d.n,
                    d.mean,
                    opt(d.sd),
                    d.median,
                    d.q1,
                    d.q3,
                    d.min,
                    d.max,
                    opt(d.cv)
                );
            }
            s.push('\n');
        }
        s
    }

    pub fn correlation_markdown(&self) -> String {
        let mut s = String::from("## Correlations\n\n");
        if self.correlations.is_empty() {
            s.push_str("Fewer than two dependent metrics.\n\n");
            return s;
        }
        let _ = writeln!(s, "| x | y | n | Spearman rho | p |");
        let _ = writeln!(s, "|---|---|---|---|---|");
        for c in &self.correlations {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} |",
                c.metric_x,
                c.metric_y,
                c.n,
                opt(c.rho),
                c.note.clone().unwrap_or_else(|| opt(c.p))
            );
        }
        s.push('\n');
        s
    }

    pub fn flags_markdown(&self) -> String {
        let mut s = String::from("## Data sanity\n\n");
        if self.flags.is_empty() {
            s.push_str("No issues found.\n");
        }
        for f in &self.flags {
            let _ = writeln!(s, "- {f}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::generate_run_table;
    use crate::model::parse_definition;
    use crate::stats::{Decision, EffectMethod, Magnitude};

    fn definition() -> ExperimentDefinition {
        parse_definition(
            r#"{
            "name": "t", "gqm": {"goal": "g", "questions": ["q"]},
            "factors": [{"name": "runtime", "kind": "main",
                         "treatments": [{"name": "A"}, {"name": "B"}]}],
            "subjects": [{"name": "s", "command": "true"}],
            "metrics": [{"name": "energy", "unit": "joule"}, {"name": "time", "unit": "second"}],
            "hypotheses": [{"id": "H1", "metric": "energy", "factor": "runtime",
                            "treatment_a": "A", "treatment_b": "B"}],
            "repetitions": 10, "mode": "automatic", "seed": 3
        }"#,
        )
        .unwrap()
    }

    fn populate(table: &mut RunTable, f: impl Fn(&str, u32) -> f64) {
        for r in &mut table.runs {
            let t = r.treatment_of("runtime").unwrap().to_string();
            r.status = RunStatus::Done;
            r.measures.insert("energy".into(), f(&t, r.repetition));
            r.measures.insert("time".into(), r.repetition as f64);
        }
    }

    #[test]
    fn separated_groups_reject_with_full_dominance() {
        let def = definition();
        let mut table = generate_run_table(&def).unwrap();
        populate(&mut table, |t, rep| {
            let jitter = (rep as f64 * 0.37).sin() * 0.01;
            if t == "A" {
                10.0 + jitter
            } else {
                20.0 + jitter
            }
        });
        let report = analyze(&def, &table).unwrap();
        let h = report.hypothesis("H1").unwrap();
        assert_eq!(h.test.decision, Decision::Reject);
        assert_eq!(h.cliffs_delta.value, -1.0);
        assert_eq!(h.cliffs_delta.magnitude, Magnitude::Large);
        assert_eq!(report.correlations.len(), 1);
        assert!(report.flags.is_empty());
        assert!(report.to_markdown().contains("**reject** the null"));
    }

    #[test]
    fn non_normal_groups_use_the_rank_test() {
        let def = definition();
        let mut table = generate_run_table(&def).unwrap();
        // heavy right tail in both groups
        populate(&mut table, |t, rep| {
            let base = if t == "A" { 1.0 } else { 1.5 };
            base + if rep == 10 { 100.0 } else { rep as f64 * 0.01 }
        });
        let h = analyze(&def, &table).unwrap().hypotheses.remove(0);
        assert!(!h.normality[0].normal);
        assert!(h.test.test_name.starts_with("mann_whitney"));
        assert_eq!(h.effect.method, EffectMethod::CliffsDelta);
    }

    #[test]
    fn one_run_per_group_is_insufficient() {
        let def = definition();
        let mut table = generate_run_table(&def).unwrap();
        populate(&mut table, |_, _| 1.0);
        let mut seen_a = false;
        for r in &mut table.runs {
            if r.treatment_of("runtime") == Some("A") {
                if seen_a {
                    r.status = RunStatus::Failed;
                }
                seen_a = true;
            }
        }
        let err = analyze(&def, &table).unwrap_err();
        assert!(
            matches!(err, StatsError::InsufficientData { ref hypothesis, n: 1, .. } if hypothesis == "H1")
        );
    }

    #[test]
    fn sanity_flags() {
        let def = definition();
        let mut table = generate_run_table(&def).unwrap();
        populate(&mut table, |t, rep| {
            if t == "A" {
                -(rep as f64)
            } else {
                rep as f64
            }
        });
        table.runs[0].measures.remove("time");
        table.runs[1].status = RunStatus::Failed;
        let report = analyze(&def, &table).unwrap();
        assert!(report
            .flags
            .iter()
            .any(|f| matches!(f, SanityFlag::NegativeEnergy { .. })));
        assert!(report
            .flags
            .iter()
            .any(|f| matches!(f, SanityFlag::MissingCell { metric, .. } if metric == "time")));
        assert!(report.flags.contains(&SanityFlag::FailedRuns { count: 1 }));
    }

    #[test]
    fn empty_table_is_an_error() {
        let def = definition();
        let table = generate_run_table(&def).unwrap();
        assert_eq!(
            analyze(&def, &table).unwrap_err(),
            StatsError::NoCompletedRuns
        );
    }
}
