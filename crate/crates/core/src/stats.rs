//! Goodness-of-fit helpers used by the oracles and the acceptance suite.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::measure::Law1D;

/// Asymptotic two-sample KS coefficient at the 0.01 level.
pub const KS_C_001: f64 = 1.628;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
}

pub fn ks_critical_two_sample(n: usize, m: usize) -> f64 {
    KS_C_001 * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

fn sorted(a: &[f64]) -> Vec<f64> {
    let mut v = a.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov-Smirnov test at the 0.01 level. Ties are handled
/// by comparing the empirical distribution functions after each distinct value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Precondition(
            "KS test needs two non-empty samples".into(),
        ));
    }
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let critical = ks_critical_two_sample(n, m);
    Ok(TestOutcome {
        statistic: d,
        critical,
        pass: d < critical,
    })
}

/// One-sample KS distance to a law that may have atoms. The critical value
/// is the asymptotic continuous-case one, which is conservative with atoms.
pub fn ks_one_sample<L: Law1D + ?Sized>(sample: &[f64], law: &L) -> Result<TestOutcome> {
    if sample.is_empty() {
        return Err(Error::Precondition(
            "KS test needs a non-empty sample".into(),
        ));
    }
    let s = sorted(sample);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < s.len() {
        let x = s[i];
        let below = i as f64 / n;
        while i < s.len() && s[i] <= x {
            i += 1;
        }
        let upto = i as f64 / n;
        let f = law.cdf(x);
        let f_left = 1.0 - law.survival_left(x);
        d = d.max((upto - f).abs()).max((below - f_left).abs());
    }
    let critical = KS_C_001 / n.sqrt();
    Ok(TestOutcome {
        statistic: d,
        critical,
        pass: d < critical,
    })
}

/// Pearson chi-square goodness of fit at the 0.01 level. Cells with zero
/// expected probability must be empty.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<TestOutcome> {
    if counts.len() != probs.len() || counts.is_empty() {
        return Err(Error::Precondition(
            "counts and probabilities must have equal non-zero length".into(),
        ));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::Precondition("no observations".into()));
    }
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&c, &p) in counts.iter().zip(probs) {
        if p <= 0.0 {
            if c > 0 {
                return Ok(TestOutcome {
                    statistic: f64::INFINITY,
                    critical: 0.0,
                    pass: false,
                });
            }
            continue;
        }
        let e = p * n as f64;
        stat += (c as f64 - e).powi(2) / e;
        cells += 1;
    }
    let df = (cells.max(2) - 1) as f64;
    let critical = ChiSquared::new(df)
        .map_err(|e| Error::Precondition(e.to_string()))?
        .inverse_cdf(0.99);
    Ok(TestOutcome {
        statistic: stat,
        critical,
        pass: stat < critical,
    })
}

/// Sample mean and its standard error.
pub fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Pearson correlation.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, Piece, Prob1D};
    use crate::rng::std_exp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 2.0, 5.0];
        let out = ks_two_sample(&a, &a).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert!(out.pass);
    }

    #[test]
    fn separated_exponentials_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..10_000).map(|_| 1.0 + std_exp(&mut rng)).collect();
        let b: Vec<f64> = (0..10_000).map(|_| 1.0 + 2.0 * std_exp(&mut rng)).collect();
        let out = ks_two_sample(&a, &b).unwrap();
        assert!((out.critical - 0.023).abs() < 5e-4);
        assert!(!out.pass);
    }

    #[test]
    fn one_sample_with_atom() {
        let law = Prob1D::new(
            1.0,
            vec![Atom {
                loc: 1.0,
                mass: 0.5,
            }],
            vec![Piece::exponential(1.0, 1.0, 0.5)],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s: Vec<f64> = (0..20_000)
            .map(|_| {
                if std_exp(&mut rng) < 2f64.ln() {
                    1.0
                } else {
                    1.0 + std_exp(&mut rng)
                }
            })
            .collect();
        assert!(ks_one_sample(&s, &law).unwrap().pass);
        let shifted: Vec<f64> = s.iter().map(|v| v + 0.2).collect();
        assert!(!ks_one_sample(&shifted, &law).unwrap().pass);
    }

    #[test]
    fn chi_square_critical_values() {
        let out = chi_square_gof(&[50, 50], &[0.5, 0.5]).unwrap();
        assert!((out.critical - 6.6349).abs() < 1e-3);
        assert_eq!(out.statistic, 0.0);
        assert!(!chi_square_gof(&[90, 10], &[0.5, 0.5]).unwrap().pass);
        assert!(!chi_square_gof(&[1, 99], &[0.0, 1.0]).unwrap().pass);
    }

    #[test]
    fn mean_se() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
