use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::{check, mean, midranks, variance, StatsError};
use crate::model::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    FailToReject,
}

impl Decision {
    fn from_p(p: f64, alpha: f64) -> Self {
        if p < alpha {
            Decision::Reject
        } else {
            Decision::FailToReject
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Reject => "reject",
            Decision::FailToReject => "fail to reject",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_name: String,
    pub statistic: f64,
    /// Degrees of freedom, for t tests.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    pub p_value: f64,
    pub alpha: f64,
    pub direction: Direction,
    pub decision: Decision,
}

impl TestResult {
    fn new(
        test_name: &str,
        statistic: f64,
        df: Option<f64>,
        p_value: f64,
        alpha: f64,
        direction: Direction,
    ) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        TestResult {
            test_name: test_name.to_string(),
            statistic,
            df,
            p_value,
            alpha,
            direction,
            decision: Decision::from_p(p_value, alpha),
        }
    }
}

/// Welch's unequal-variance t test with Welch–Satterthwaite degrees of freedom.
pub fn welch_t(
    a: &[f64],
    b: &[f64],
    direction: Direction,
    alpha: f64,
) -> Result<TestResult, StatsError> {
    check(a)?;
    check(b)?;
    for v in [a, b] {
        if v.len() < 2 {
            return Err(StatsError::SampleSize {
                test: "welch_t",
                n: v.len(),
                min: 2,
                max: usize::MAX,
            });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (variance(a) / na, variance(b) / nb);
    if sa + sb == 0.0 {
        return Err(StatsError::Degenerate(
            "welch_t: both samples have zero variance",
        ));
    }
    let t = (mean(a) - mean(b)) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    let p = match direction {
        Direction::TwoSided => 2.0 * dist.cdf(-t.abs()),
        Direction::ALess => dist.cdf(t),
        Direction::AGreater => dist.cdf(-t),
    };
    Ok(TestResult::new("welch_t", t, Some(df), p, alpha, direction))
}

/// Largest n_a · n_b for which the exact distribution is enumerated.
pub const EXACT_LIMIT: usize = 64;

/// Number of rank arrangements yielding each U in 0..=n_a·n_b, where U counts
/// pairs with the first sample's element above the second's.
pub fn mann_whitney_counts(na: usize, nb: usize) -> Vec<u64> {
    // f[m][n][u], built by placing the largest pooled element last
    let max_u = na * nb;
    let mut f = vec![vec![vec![0u64; max_u + 1]; nb + 1]; na + 1];
    for (m, row) in f.iter_mut().enumerate() {
        for (n, cell) in row.iter_mut().enumerate() {
            if m == 0 || n == 0 {
                cell[0] = 1;
            }
        }
    }
    for m in 1..=na {
        for n in 1..=nb {
            for u in 0..=m * n {
                let from_a = if u >= n { f[m - 1][n][u - n] } else { 0 };
                f[m][n][u] = from_a + f[m][n - 1][u];
            }
        }
    }
    f.swap_remove(na).swap_remove(nb)
}

/// Exact null CDF of U: entry u is P(U ≤ u).
pub fn mann_whitney_exact_cdf(na: usize, nb: usize) -> Vec<f64> {
    let counts = mann_whitney_counts(na, nb);
    let total: u64 = counts.iter().sum();
    let mut acc = 0;
    counts
        .iter()
        .map(|c| {
            acc += c;
            acc as f64 / total as f64
        })
        .collect()
}

/// Mann–Whitney U test. U is reported for `a`.
///
/// Exact when n_a·n_b ≤ 64 and there are no ties; otherwise the normal
/// approximation with tie and continuity corrections.
pub fn mann_whitney(
    a: &[f64],
    b: &[f64],
    direction: Direction,
    alpha: f64,
) -> Result<TestResult, StatsError> {
    check(a)?;
    check(b)?;
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u1 = rank_sum_a - (na * (na + 1)) as f64 / 2.0;
    let u2 = (na * nb) as f64 - u1;

    let mut tie_sizes = Vec::new();
    {
        let mut s = pooled.clone();
        s.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < s.len() {
            let j = s[i..].iter().take_while(|&&x| x == s[i]).count();
            if j > 1 {
                tie_sizes.push(j as f64);
            }
            i += j;
        }
    }

    if na * nb <= EXACT_LIMIT && tie_sizes.is_empty() {
        let counts = mann_whitney_counts(na, nb);
        let total: u64 = counts.iter().sum();
        let u = u1 as usize;
        let le = |u: usize| counts[..=u].iter().sum::<u64>();
        let ge = |u: usize| counts[u..].iter().sum::<u64>();
        let p = match direction {
            Direction::TwoSided => 2.0 * le(u).min(ge(u)) as f64 / total as f64,
            Direction::ALess => le(u) as f64 / total as f64,
            Direction::AGreater => ge(u) as f64 / total as f64,
        };
        return Ok(TestResult::new(
            "mann_whitney_exact",
            u1,
            None,
            p,
            alpha,
            direction,
        ));
    }

    let n = (na + nb) as f64;
    let mu = (na * nb) as f64 / 2.0;
    let tie_term: f64 = tie_sizes.iter().map(|t| t * t * t - t).sum();
    let sigma = ((na * nb) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)))).sqrt();
    let p = if sigma > 0.0 {
        let u = match direction {
            Direction::TwoSided => u1.max(u2),
            Direction::ALess => u2,
            Direction::AGreater => u1,
        };
        let z = (u - mu - 0.5) / sigma;
        let sf = Normal::standard().sf(z);
        match direction {
            Direction::TwoSided => 2.0 * sf,
            _ => sf,
        }
    } else {
        // every observation tied
        1.0
    };
    Ok(TestResult::new(
        "mann_whitney_normal",
        u1,
        None,
        p,
        alpha,
        direction,
    ))
}
