use std::fmt;

use serde::{Deserialize, Serialize};

use super::{check, mean, sorted, variance, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectMethod {
    CliffsDelta,
    CohensD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    fn classify(abs: f64, cuts: [f64; 3]) -> Self {
        if abs < cuts[0] {
            Magnitude::Negligible
        } else if abs < cuts[1] {
            Magnitude::Small
        } else if abs < cuts[2] {
            Magnitude::Medium
        } else {
            Magnitude::Large
        }
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Magnitude::Negligible => "negligible",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
        })
    }
}

pub const CLIFF_CUTS: [f64; 3] = [0.147, 0.33, 0.474];
pub const COHEN_CUTS: [f64; 3] = [0.2, 0.5, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub method: EffectMethod,
    pub value: f64,
    pub magnitude: Magnitude,
}

impl fmt::Display for EffectSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.method {
            EffectMethod::CliffsDelta => "Cliff's delta",
            EffectMethod::CohensD => "Cohen's d",
        };
        write!(f, "{name} = {:.3} ({})", self.value, self.magnitude)
    }
}

/// (#{x > y} − #{x < y}) / (n_a · n_b), counted with a sort and binary searches.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<EffectSize, StatsError> {
    check(a)?;
    check(b)?;
    let b = sorted(b);
    let mut dominance: i64 = 0;
    for &x in a {
        let below = b.partition_point(|&y| y < x) as i64;
        let above = (b.len() - b.partition_point(|&y| y <= x)) as i64;
        dominance += below - above;
    }
    let value = dominance as f64 / (a.len() * b.len()) as f64;
    Ok(EffectSize {
        method: EffectMethod::CliffsDelta,
        value,
        magnitude: Magnitude::classify(value.abs(), CLIFF_CUTS),
    })
}

/// Mean difference over the pooled standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<EffectSize, StatsError> {
    check(a)?;
    check(b)?;
    for v in [a, b] {
        if v.len() < 2 {
            return Err(StatsError::SampleSize {
                test: "cohens_d",
                n: v.len(),
                min: 2,
                max: usize::MAX,
            });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0)).sqrt();
    if pooled == 0.0 {
        return Err(StatsError::Degenerate(
            "cohens_d: pooled standard deviation is zero",
        ));
    }
    let value = (mean(a) - mean(b)) / pooled;
    Ok(EffectSize {
        method: EffectMethod::CohensD,
        value,
        magnitude: Magnitude::classify(value.abs(), COHEN_CUTS),
    })
}
