//! Shapiro–Wilk W with Royston's coefficient and p-value approximations.

use statrs::distribution::{ContinuousCDF, Normal};

use super::{check, sorted, StatsError};

/// c0 + c1·x + c2·x² + …
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Royston's approximations to the half vector of Shapiro–Wilk coefficients,
/// largest first.
fn coefficients(n: usize) -> Vec<f64> {
    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    let half = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let std = Normal::standard();
    let an25 = n as f64 + 0.25;
    let m: Vec<f64> = (1..=half)
        .map(|i| std.inverse_cdf((i as f64 - 0.375) / an25))
        .collect();
    let summ2 = 2.0 * m.iter().map(|x| x * x).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / (n as f64).sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;

    let mut a = vec![0.0; half];
    a[0] = a1;
    let (first, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        a[1] = a2;
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        (2, fac)
    } else {
        (
            1,
            ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt(),
        )
    };
    for i in first..half {
        a[i] = -m[i] / fac;
    }
    a
}

fn p_value(w: f64, n: usize) -> f64 {
    const G: [f64; 2] = [-2.273, 0.459];
    const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
    const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];

    if n == 3 {
        // exact for n = 3
        let p = 6.0 / std::f64::consts::PI * (w.sqrt().asin() - std::f64::consts::FRAC_PI_3);
        return p.max(0.0);
    }
    let an = n as f64;
    let mut w1 = (1.0 - w).ln();
    let (m, s) = if n <= 11 {
        let gamma = poly(&G, an);
        if w1 >= gamma {
            return 1e-99;
        }
        w1 = -(gamma - w1).ln();
        (poly(&C3, an), poly(&C4, an).exp())
    } else {
        let x = an.ln();
        (poly(&C5, x), poly(&C6, x).exp())
    };
    Normal::new(m, s).expect("positive scale").sf(w1)
}

/// Shapiro–Wilk normality test, returning (W, p). Requires 3 ≤ n ≤ 5000.
pub fn shapiro_wilk(v: &[f64]) -> Result<(f64, f64), StatsError> {
    check(v)?;
    let n = v.len();
    if !(3..=5000).contains(&n) {
        return Err(StatsError::SampleSize {
            test: "shapiro_wilk",
            n,
            min: 3,
            max: 5000,
        });
    }
    let x = sorted(v);
    let range = x[n - 1] - x[0];
    if range <= 0.0 {
        return Err(StatsError::Degenerate(
            "shapiro_wilk: sample has zero variance",
        ));
    }
    let half = coefficients(n);
    let mean = x.iter().sum::<f64>() / n as f64;
    let ss: f64 = x.iter().map(|xi| ((xi - mean) / range).powi(2)).sum();
    let lin: f64 = half
        .iter()
        .enumerate()
        .map(|(i, ai)| ai * (x[n - 1 - i] - x[i]) / range)
        .sum();
    let norm: f64 = 2.0 * half.iter().map(|a| a * a).sum::<f64>();
    let w = (lin * lin / (norm * ss)).min(1.0);
    Ok((w, p_value(w, n).clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn small_fixtures_match_the_reference() {
        // scipy.stats.shapiro
        let cases: [(&[f64], f64, f64); 3] = [
            (&[1.0, 2.0, 4.0], 0.9642857142857142, 0.6368868450289689),
            (
                &[3.1, 1.2, 5.5, 2.2, 2.9],
                0.9318770121302429,
                0.60922535357792,
            ),
            (
                &[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0],
                0.9166338305870235,
                0.403149610448198,
            ),
        ];
        for (v, w, p) in cases {
            let (w_, p_) = shapiro_wilk(v).unwrap();
            assert_abs_diff_eq!(w_, w, epsilon = 1e-4);
            assert_abs_diff_eq!(p_, p, epsilon = 1e-3);
        }
    }

    #[test]
    fn normal_scores_give_w_near_one() {
        let std = Normal::standard();
        let n = 30;
        let scores: Vec<f64> = (1..=n)
            .map(|i| 4.0 + 2.5 * std.inverse_cdf((i as f64 - 0.375) / (n as f64 + 0.25)))
            .collect();
        let (w, p) = shapiro_wilk(&scores).unwrap();
        assert!(w > 0.99, "W = {w}");
        assert!(p > 0.5);
    }

    #[test]
    fn preconditions() {
        assert!(matches!(
            shapiro_wilk(&[1.0, 2.0]),
            Err(StatsError::SampleSize { n: 2, .. })
        ));
        assert!(matches!(
            shapiro_wilk(&[1.0; 5]),
            Err(StatsError::Degenerate(_))
        ));
    }
}
