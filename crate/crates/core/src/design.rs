//! Run-table generation, fractional subsetting, and duration estimates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ExperimentDefinition, FactorKind};

/// Default ceiling on the number of runs a table may hold.
pub const DEFAULT_RUN_CAP: u128 = 10_000_000;

/// Advisory duration budget for a whole experiment.
pub const DEFAULT_BUDGET: Duration = Duration::from_secs(40 * 3600);

#[derive(Debug, Error, PartialEq)]
pub enum DesignError {
    #[error("run table would hold {runs} runs, above the cap of {cap}")]
    Overflow { runs: u128, cap: u128 },
    #[error("fraction must lie in (0, 1], got {0}")]
    FractionDomain(String),
    #[error("invalid fraction `{0}`")]
    FractionSyntax(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    #[default]
    Pending,
    Done,
    Failed,
}

impl RunStatus {
    pub fn as_csv(self) -> &'static str {
        match self {
            RunStatus::Pending => "pending",
            RunStatus::Done => "done",
            RunStatus::Failed => "FAILED",
        }
    }

    pub fn from_csv(s: &str) -> Option<Self> {
        match s {
            "pending" => Some(RunStatus::Pending),
            "done" => Some(RunStatus::Done),
            "FAILED" | "failed" => Some(RunStatus::Failed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub run_id: String,
    pub trial_key: String,
    pub subject: String,
    /// Chosen treatment per factor, in factor declaration order (fixed factors included).
    pub treatments: Vec<(String, String)>,
    pub repetition: u32,
    pub block: Option<String>,
    pub measures: BTreeMap<String, f64>,
    pub status: RunStatus,
}

impl Run {
    pub fn treatment_of(&self, factor: &str) -> Option<&str> {
        self.treatments
            .iter()
            .find(|(f, _)| f == factor)
            .map(|(_, t)| t.as_str())
    }

    /// Merged treatment parameters of this run.
    pub fn params(&self, def: &ExperimentDefinition) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        for (factor, treatment) in &self.treatments {
            if let Some(t) = def.factor(factor).and_then(|f| f.treatment(treatment)) {
                out.extend(t.params.iter().map(|(k, v)| (k.clone(), v.clone())));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTable {
    pub runs: Vec<Run>,
    pub seed: u64,
    pub order_digest: String,
}

impl RunTable {
    pub fn new(runs: Vec<Run>, seed: u64) -> Self {
        let order_digest = order_digest(&runs);
        RunTable {
            runs,
            seed,
            order_digest,
        }
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn trial_keys(&self) -> BTreeSet<&str> {
        self.runs.iter().map(|r| r.trial_key.as_str()).collect()
    }

    pub fn get(&self, run_id: &str) -> Option<&Run> {
        self.runs.iter().find(|r| r.run_id == run_id)
    }
}

/// SHA-256 over the newline-joined run ids, hex encoded.
pub fn order_digest(runs: &[Run]) -> String {
    let mut hasher = Sha256::new();
    for run in runs {
        hasher.update(run.run_id.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Full-factorial runs in canonical (unshuffled) order: subjects outermost,
/// then factors in declaration order, repetitions innermost.
pub fn cross_product(def: &ExperimentDefinition) -> Result<Vec<Run>, DesignError> {
    cross_product_capped(def, DEFAULT_RUN_CAP)
}

pub fn cross_product_capped(
    def: &ExperimentDefinition,
    cap: u128,
) -> Result<Vec<Run>, DesignError> {
    let total = def.trial_count() * def.repetitions as u128;
    if total > cap {
        return Err(DesignError::Overflow { runs: total, cap });
    }

    // every combination of one treatment per factor
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for factor in &def.factors {
        let mut next = Vec::with_capacity(combos.len() * factor.treatments.len());
        for combo in &combos {
            for t in &factor.treatments {
                let mut c = combo.clone();
                c.push((factor.name.clone(), t.name.clone()));
                next.push(c);
            }
        }
        combos = next;
    }

    let blocking = def.blocking_factor().map(|f| f.name.as_str());
    let mut runs = Vec::with_capacity(total as usize);
    for subject in &def.subjects {
        for combo in &combos {
            let expanding: Vec<&(String, String)> = combo
                .iter()
                .filter(|(f, _)| {
                    def.factor(f)
                        .map(|f| f.kind != FactorKind::Fixed)
                        .unwrap_or(true)
                })
                .collect();
            let mut trial_key = format!("subject={}", subject.name);
            for (f, t) in &expanding {
                trial_key.push_str(&format!(";{f}={t}"));
            }
            let joined: Vec<&str> = expanding.iter().map(|(_, t)| t.as_str()).collect();
            let block =
                blocking.and_then(|b| combo.iter().find(|(f, _)| f == b).map(|(_, t)| t.clone()));
            for repetition in 1..=def.repetitions {
                let index = runs.len() + 1;
                let mut run_id = format!("r{index}_{}", subject.name);
                if !joined.is_empty() {
                    run_id.push('_');
                    run_id.push_str(&joined.join("_"));
                }
                runs.push(Run {
                    run_id,
                    trial_key: trial_key.clone(),
                    subject: subject.name.clone(),
                    treatments: combo.clone(),
                    repetition,
                    block: block.clone(),
                    measures: BTreeMap::new(),
                    status: RunStatus::Pending,
                });
            }
        }
    }
    Ok(runs)
}

/// Shuffles runs with the seeded generator. With blocks, runs are grouped by
/// block in declared order and shuffled within each block.
fn shuffle_runs(def: &ExperimentDefinition, mut runs: Vec<Run>, seed: u64) -> Vec<Run> {
    let mut rng = rng_for(seed);
    match def.blocking_factor() {
        None => {
            runs.shuffle(&mut rng);
            runs
        }
        Some(block_factor) => {
            let mut by_block: BTreeMap<usize, Vec<Run>> = BTreeMap::new();
            for run in runs {
                let position = block_factor
                    .treatments
                    .iter()
                    .position(|t| Some(&t.name) == run.block.as_ref())
                    .unwrap_or(usize::MAX);
                by_block.entry(position).or_default().push(run);
            }
            let mut out = Vec::new();
            for (_, mut group) in by_block {
                group.shuffle(&mut rng);
                out.extend(group);
            }
            out
        }
    }
}

/// Expands a validated definition into its randomized full-factorial run table.
pub fn generate_run_table(def: &ExperimentDefinition) -> Result<RunTable, DesignError> {
    generate_run_table_capped(def, DEFAULT_RUN_CAP)
}

pub fn generate_run_table_capped(
    def: &ExperimentDefinition,
    cap: u128,
) -> Result<RunTable, DesignError> {
    let runs = cross_product_capped(def, cap)?;
    Ok(RunTable::new(shuffle_runs(def, runs, def.seed), def.seed))
}

/// A rational number in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    num: u64,
    den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Result<Self, DesignError> {
        if den == 0 || num == 0 || num > den {
            return Err(DesignError::FractionDomain(format!("{num}/{den}")));
        }
        Ok(Fraction { num, den })
    }

    pub const ONE: Fraction = Fraction { num: 1, den: 1 };

    /// ⌈self × n⌉ in exact integer arithmetic.
    pub fn ceil_of(self, n: usize) -> usize {
        let scaled = self.num as u128 * n as u128;
        scaled.div_ceil(self.den as u128) as usize
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Fraction {
    type Err = DesignError;

    /// Accepts `p/q` or a decimal such as `0.25`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let syntax = || DesignError::FractionSyntax(s.to_string());
        if let Some((p, q)) = s.split_once('/') {
            let p: u64 = p.trim().parse().map_err(|_| syntax())?;
            let q: u64 = q.trim().parse().map_err(|_| syntax())?;
            return Fraction::new(p, q);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() || frac.len() > 18 {
            return Err(syntax());
        }
        let int: u64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| syntax())?
        };
        let frac_digits: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| syntax())?
        };
        let den = 10u64.pow(frac.len() as u32);
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_digits))
            .ok_or_else(syntax)?;
        Fraction::new(num, den)
    }
}

/// Keeps ⌈fraction × trials⌉ trials chosen by a seeded permutation and
/// re-shuffles the surviving runs.
///
/// Trials are permuted from their sorted order, so for one seed a smaller
/// fraction always keeps a prefix of what a larger one keeps.
pub fn apply_fraction(
    def: &ExperimentDefinition,
    table: &RunTable,
    fraction: Fraction,
    seed: u64,
) -> RunTable {
    let mut trials: Vec<&str> = table.trial_keys().into_iter().collect();
    let mut rng = rng_for(seed ^ 0x6672_6163_7469_6f6e);
    trials.shuffle(&mut rng);
    let keep: BTreeSet<&str> = trials[..fraction.ceil_of(trials.len())]
        .iter()
        .copied()
        .collect();
    let mut kept: Vec<Run> = table
        .runs
        .iter()
        .filter(|r| keep.contains(r.trial_key.as_str()))
        .cloned()
        .collect();
    // canonical order first so the reshuffle depends only on the kept set
    kept.sort_by_key(|r| canonical_index(&r.run_id));
    RunTable::new(shuffle_runs(def, kept, seed), seed)
}

fn canonical_index(run_id: &str) -> u64 {
    run_id
        .strip_prefix('r')
        .and_then(|rest| rest.split('_').next())
        .and_then(|n| n.parse().ok())
        .unwrap_or(u64::MAX)
}

/// |runs| × per_run + max(0, |runs| − 1) × cooldown; no cooldown follows the last run.
pub fn estimate_duration(run_count: usize, per_run: Duration, cooldown: Duration) -> Duration {
    let n = run_count as u32;
    per_run * n + cooldown * n.saturating_sub(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum FeasibilityVerdict {
    Ok,
    OverBudget { excess: Duration },
}

impl FeasibilityVerdict {
    pub fn is_ok(self) -> bool {
        matches!(self, FeasibilityVerdict::Ok)
    }
}

/// Feasible only when strictly under budget.
pub fn check_feasibility(total: Duration, budget: Duration) -> FeasibilityVerdict {
    if total < budget {
        FeasibilityVerdict::Ok
    } else {
        FeasibilityVerdict::OverBudget {
            excess: total - budget,
        }
    }
}

/// Printable summary of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub runs: usize,
    pub trials: usize,
    pub estimated: Duration,
    pub verdict: FeasibilityVerdict,
}

impl PlanSummary {
    pub fn new(def: &ExperimentDefinition, table: &RunTable) -> Self {
        let estimated = estimate_duration(table.len(), def.per_run_estimate(), def.cooldown());
        PlanSummary {
            runs: table.len(),
            trials: table.trial_keys().len(),
            estimated,
            verdict: check_feasibility(estimated, def.budget()),
        }
    }
}

pub fn format_duration(d: Duration) -> String {
    let secs = d.as_secs_f64();
    format!("{secs:.0} s ({:.2} h)", secs / 3600.0)
}

impl fmt::Display for PlanSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} runs, {} trials", self.runs, self.trials)?;
        writeln!(f, "estimated duration: {}", format_duration(self.estimated))?;
        match self.verdict {
            FeasibilityVerdict::Ok => write!(f, "feasibility: ok"),
            FeasibilityVerdict::OverBudget { excess } => {
                write!(f, "feasibility: over budget by {}", format_duration(excess))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_definition, Factor, Treatment};

    fn def_with(subjects: usize, levels: &[usize], reps: u32) -> ExperimentDefinition {
        let factors: Vec<String> = levels
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let ts: Vec<String> = (0..n)
                    .map(|j| format!(r#"{{"name": "f{i}t{j}"}}"#))
                    .collect();
                format!(
                    r#"{{"name": "f{i}", "kind": "main", "treatments": [{}]}}"#,
                    ts.join(",")
                )
            })
            .collect();
        let subs: Vec<String> = (0..subjects)
            .map(|s| format!(r#"{{"name": "s{s}", "command": "true"}}"#))
            .collect();
        parse_definition(&format!(
            r#"{{"name": "t", "gqm": {{"goal": "g", "questions": ["q"]}},
                "factors": [{}], "subjects": [{}], "metrics": [], "repetitions": {reps}, "seed": 7}}"#,
            factors.join(","),
            subs.join(",")
        ))
        .unwrap()
    }

    #[test]
    fn single_run_table() {
        let table = generate_run_table(&def_with(1, &[1], 1)).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table.runs[0].run_id, "r1_s0_f0t0");
        assert_eq!(table.runs[0].trial_key, "subject=s0;f0=f0t0");
    }

    #[test]
    fn cardinality_follows_the_product() {
        let table = generate_run_table(&def_with(3, &[4, 2], 10)).unwrap();
        assert_eq!(table.len(), 240);
        assert_eq!(table.trial_keys().len(), 24);
        let table = generate_run_table(&def_with(21, &[1], 25)).unwrap();
        assert_eq!(table.len(), 525);
    }

    #[test]
    fn run_ids_are_unique() {
        let table = generate_run_table(&def_with(3, &[3, 2], 4)).unwrap();
        let ids: BTreeSet<_> = table.runs.iter().map(|r| &r.run_id).collect();
        assert_eq!(ids.len(), table.len());
    }

    #[test]
    fn overflow_is_reported() {
        let def = def_with(2, &[10, 10], 10);
        assert_eq!(
            generate_run_table_capped(&def, 1000),
            Err(DesignError::Overflow {
                runs: 2000,
                cap: 1000
            })
        );
    }

    #[test]
    fn fixed_factors_do_not_expand() {
        let mut def = def_with(1, &[2], 2);
        def.factors.push(Factor {
            name: "os".into(),
            kind: FactorKind::Fixed,
            treatments: vec![Treatment {
                name: "linux".into(),
                params: Default::default(),
            }],
        });
        let table = generate_run_table(&def).unwrap();
        assert_eq!(table.len(), 4);
        assert_eq!(table.runs[0].treatment_of("os"), Some("linux"));
        assert!(!table.runs[0].trial_key.contains("os="));
    }

    #[test]
    fn blocks_are_contiguous_and_in_declared_order() {
        let mut def = def_with(2, &[3], 4);
        def.factors.push(Factor {
            name: "device".into(),
            kind: FactorKind::Blocking,
            treatments: ["pixel", "nexus", "galaxy"]
                .iter()
                .map(|n| Treatment {
                    name: n.to_string(),
                    params: Default::default(),
                })
                .collect(),
        });
        let table = generate_run_table(&def).unwrap();
        let blocks: Vec<&str> = table
            .runs
            .iter()
            .map(|r| r.block.as_deref().unwrap())
            .collect();
        let mut segments: Vec<&str> = blocks.clone();
        segments.dedup();
        assert_eq!(segments, vec!["pixel", "nexus", "galaxy"]);
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!(
            "1/2".parse::<Fraction>().unwrap(),
            Fraction::new(1, 2).unwrap()
        );
        assert_eq!("0.5".parse::<Fraction>().unwrap().as_f64(), 0.5);
        assert_eq!("1".parse::<Fraction>().unwrap().as_f64(), 1.0);
        assert!(matches!(
            "0".parse::<Fraction>(),
            Err(DesignError::FractionDomain(_))
        ));
        assert!(matches!(
            "3/2".parse::<Fraction>(),
            Err(DesignError::FractionDomain(_))
        ));
        assert!(matches!(
            "1.5".parse::<Fraction>(),
            Err(DesignError::FractionDomain(_))
        ));
        assert!(matches!(
            "abc".parse::<Fraction>(),
            Err(DesignError::FractionSyntax(_))
        ));
    }

    #[test]
    fn half_fraction_keeps_twelve_complete_trials() {
        let def = def_with(3, &[4, 2], 10);
        let table = generate_run_table(&def).unwrap();
        let half = apply_fraction(&def, &table, Fraction::new(1, 2).unwrap(), 11);
        let mut per_trial: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &half.runs {
            *per_trial.entry(r.trial_key.as_str()).or_default() += 1;
        }
        assert_eq!(per_trial.len(), 12);
        assert!(per_trial.values().all(|&n| n == 10));
    }

    #[test]
    fn full_fraction_is_identity_on_trials() {
        let def = def_with(2, &[3], 2);
        let table = generate_run_table(&def).unwrap();
        let all = apply_fraction(&def, &table, Fraction::ONE, 3);
        assert_eq!(all.trial_keys(), table.trial_keys());
        assert_eq!(all.len(), table.len());
    }

    #[test]
    fn fraction_is_deterministic_and_monotone() {
        let def = def_with(3, &[4, 2], 2);
        let table = generate_run_table(&def).unwrap();
        let a = apply_fraction(&def, &table, Fraction::new(1, 3).unwrap(), 5);
        let b = apply_fraction(&def, &table, Fraction::new(1, 3).unwrap(), 5);
        assert_eq!(a, b);
        let c = apply_fraction(&def, &table, Fraction::new(2, 3).unwrap(), 5);
        assert!(a.trial_keys().is_subset(&c.trial_keys()));
    }

    #[test]
    fn duration_estimates() {
        let s = Duration::from_secs;
        assert_eq!(estimate_duration(0, s(300), s(60)), s(0));
        assert_eq!(estimate_duration(1, s(10), s(999)), s(10));
        assert_eq!(estimate_duration(240, s(300), s(60)), s(86_340));
    }

    #[test]
    fn feasibility_is_strict() {
        let h40 = DEFAULT_BUDGET;
        assert!(check_feasibility(Duration::from_secs(86_340), h40).is_ok());
        assert_eq!(
            check_feasibility(h40, h40),
            FeasibilityVerdict::OverBudget {
                excess: Duration::ZERO
            }
        );
        assert!(check_feasibility(Duration::ZERO, h40).is_ok());
    }
}
