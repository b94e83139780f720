//! Descriptive statistics, hypothesis tests, effect sizes, and correlation.

mod analysis;
mod correlation;
mod effect;
mod inference;
mod normality;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{
    analyze, AnalysisReport, Correlation, DescriptiveRow, HypothesisResult, NormalityCheck,
    SanityFlag,
};
pub use correlation::spearman;
pub use effect::{cliffs_delta, cohens_d, EffectMethod, EffectSize, Magnitude};
pub use inference::{mann_whitney, mann_whitney_exact_cdf, welch_t, Decision, TestResult};
pub use normality::shapiro_wilk;

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("{test} needs {min}..={max} observations, got {n}")]
    SampleSize {
        test: &'static str,
        n: usize,
        min: usize,
        max: usize,
    },
    #[error("{0}")]
    Degenerate(&'static str),
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("hypothesis `{hypothesis}`: treatment `{treatment}` has {n} completed run(s) with a value for `{metric}`, at least 2 are needed")]
    InsufficientData {
        hypothesis: String,
        treatment: String,
        metric: String,
        n: usize,
    },
    #[error("no completed runs to analyze")]
    NoCompletedRuns,
}

/// A non-empty vector of finite observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SampleVector(Vec<f64>);

impl SampleVector {
    pub fn new(values: Vec<f64>) -> Result<Self, StatsError> {
        check(&values)?;
        Ok(SampleVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for SampleVector {
    type Error = StatsError;
    fn try_from(v: Vec<f64>) -> Result<Self, StatsError> {
        SampleVector::new(v)
    }
}

impl From<SampleVector> for Vec<f64> {
    fn from(v: SampleVector) -> Self {
        v.0
    }
}

fn check(v: &[f64]) -> Result<(), StatsError> {
    if v.is_empty() {
        return Err(StatsError::Empty);
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with the n−1 denominator.
pub(crate) fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

pub(crate) fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// 1-based ranks with ties sharing their mean rank.
pub(crate) fn midranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Type-7 quantile (linear interpolation between order statistics).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Absent for n = 1.
    pub sd: Option<f64>,
    pub min: f64,
    pub max: f64,
    pub q1: f64,
    pub q3: f64,
    /// sd / |mean|; absent when either is undefined or the mean is zero.
    pub cv: Option<f64>,
}

pub fn descriptive(v: &[f64]) -> Result<Descriptive, StatsError> {
    check(v)?;
    let s = sorted(v);
    let m = mean(v);
    let sd = (v.len() >= 2).then(|| variance(v).sqrt());
    Ok(Descriptive {
        n: v.len(),
        mean: m,
        median: quantile(&s, 0.5),
        sd,
        min: s[0],
        max: s[s.len() - 1],
        q1: quantile(&s, 0.25),
        q3: quantile(&s, 0.75),
        cv: sd.filter(|_| m != 0.0).map(|sd| sd / m.abs()),
    })
}

impl fmt::Display for Descriptive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n={} mean={:.4} median={:.4}",
            self.n, self.mean, self.median
        )?;
        if let Some(sd) = self.sd {
            write!(f, " sd={sd:.4}")?;
        }
        write!(f, " range=[{:.4}, {:.4}]", self.min, self.max)
    }
}
