use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{check, mean, midranks, StatsError};

/// Spearman's rank correlation with a two-sided t-approximation p value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    check(x)?;
    check(y)?;
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::SampleSize {
            test: "spearman",
            n,
            min: 3,
            max: usize::MAX,
        });
    }
    let (rx, ry) = (midranks(x), midranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Degenerate("spearman: constant vector"));
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / ((1.0 - rho) * (1.0 + rho))).sqrt();
        2.0 * StudentsT::new(0.0, 1.0, df)
            .expect("df is positive")
            .cdf(-t.abs())
    };
    Ok((rho, p.min(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_pairs() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &[10.0, 20.0, 25.0, 100.0]).unwrap().0, 1.0);
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap().0, -1.0);
    }

    #[test]
    fn invalid_inputs() {
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(StatsError::LengthMismatch(3, 2))
        );
        assert!(matches!(
            spearman(&[1.0, 2.0, 3.0], &[5.0; 3]),
            Err(StatsError::Degenerate(_))
        ));
    }
}
