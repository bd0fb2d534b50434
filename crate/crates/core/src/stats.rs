//! Small statistics toolkit: moments, least squares, bootstrap, survival fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 400;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Linear-interpolation quantile of unsorted data (`p ∈ [0, 1]`).
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut s: Vec<f64> = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, p)
}

pub fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub rss: f64,
    pub points: usize,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::Fit(format!("need at least two points, got {n}")));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    Ok(LinearFit {
        slope,
        intercept,
        rss,
        points: n,
    })
}

/// Least squares for `y = s x`.
pub fn ols_through_origin(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if x.is_empty() || sxx <= 0.0 {
        return Err(Error::Fit("degenerate abscissae".into()));
    }
    let slope = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    let rss = x.iter().zip(y).map(|(a, b)| (b - slope * a).powi(2)).sum();
    Ok(LinearFit {
        slope,
        intercept: 0.0,
        rss,
        points: x.len(),
    })
}

/// A point estimate with a percentile bootstrap interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub resamples: usize,
}

impl Estimate {
    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }

    pub fn excludes_zero(&self) -> bool {
        !self.contains(0.0)
    }

    pub fn intersects(&self, lo: f64, hi: f64) -> bool {
        self.ci_low <= hi && self.ci_high >= lo
    }
}

/// Percentile bootstrap over `groups` independent index sets of the given sizes.
///
/// `stat` receives one resampled index vector per group; resamples where it returns
/// `None` are dropped, and the run fails if more than half are dropped.
pub fn bootstrap(
    group_sizes: &[usize],
    resamples: usize,
    seed: u64,
    level: f64,
    value: f64,
    mut stat: impl FnMut(&[Vec<usize>]) -> Option<f64>,
) -> Result<Estimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(resamples);
    let mut idx: Vec<Vec<usize>> = group_sizes.iter().map(|&n| vec![0; n]).collect();
    for _ in 0..resamples {
        for (g, &n) in idx.iter_mut().zip(group_sizes) {
            for slot in g.iter_mut() {
                *slot = rng.gen_range(0..n);
            }
        }
        if let Some(v) = stat(&idx) {
            if v.is_finite() {
                draws.push(v);
            }
        }
    }
    if draws.len() * 2 < resamples {
        return Err(Error::Fit(format!(
            "bootstrap failed: only {} of {resamples} resamples produced a fit",
            draws.len()
        )));
    }
    draws.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(Estimate {
        value,
        ci_low: quantile_sorted(&draws, alpha),
        ci_high: quantile_sorted(&draws, 1.0 - alpha),
        level,
        resamples: draws.len(),
    })
}

/// `(value, S(value))` for each distinct value, with Hazen plotting positions:
/// `S(v) = (#{x > v} + 1/2) / n`.
pub fn hazen_survival(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.len() {
        let mut j = i;
        while j + 1 < s.len() && s[j + 1] == s[i] {
            j += 1;
        }
        let greater = (s.len() - j - 1) as f64;
        out.push((s[i], (greater + 0.5) / n));
        i = j + 1;
    }
    out
}

/// Fit `P(X > r) ≈ exp(−c r^γ)` by regressing `log(−log S)` on `log r` over the upper half
/// of the sample. Returns the linear fit whose slope is `γ`.
pub fn stretched_exponential_fit(samples: &[f64]) -> Result<LinearFit> {
    let med = median(samples);
    let (x, y): (Vec<f64>, Vec<f64>) = hazen_survival(samples)
        .into_iter()
        .filter(|&(r, s)| r >= med && r > 0.0 && s < 1.0)
        .map(|(r, s)| (r.ln(), (-s.ln()).ln()))
        .unzip();
    if x.len() < 3 {
        return Err(Error::Fit(format!("too few tail points ({})", x.len())));
    }
    ols(&x, &y)
}

/// Model-selection score with a parameter penalty.
pub fn bic(rss: f64, points: usize, params: usize, scale: f64) -> f64 {
    let m = points as f64;
    let floor = 1e-24 * scale.max(f64::MIN_POSITIVE);
    m * ((rss + floor) / m).ln() + params as f64 * m.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn exact_line_is_recovered() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let f = ols(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 3.0).abs() < 1e-14);
        assert!(f.rss < 1e-25);
    }

    #[test]
    fn hazen_handles_ties() {
        let s = hazen_survival(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(s, vec![(1.0, 0.875), (2.0, 0.375), (3.0, 0.125)]);
    }

    #[test]
    fn stretched_exponential_tail_is_identified() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<f64> = (0..2000)
            .map(|_| (-rng.gen::<f64>().ln()).powf(1.0))
            .collect();
        let f = stretched_exponential_fit(&samples).unwrap();
        assert!((f.slope - 1.0).abs() < 0.15, "{}", f.slope);
    }

    #[test]
    fn bootstrap_interval_brackets_the_mean() {
        let data: Vec<f64> = (0..200).map(|i| (i % 10) as f64).collect();
        let est = bootstrap(&[data.len()], 500, 3, 0.95, mean(&data), |idx| {
            Some(idx[0].iter().map(|&i| data[i]).sum::<f64>() / idx[0].len() as f64)
        })
        .unwrap();
        assert!(est.contains(4.5));
        assert!(est.ci_high - est.ci_low < 1.5);
    }

    proptest! {
        #[test]
        fn quantiles_are_monotone(mut v in proptest::collection::vec(-1e3f64..1e3, 1..50), p in 0.0f64..1.0, q in 0.0f64..1.0) {
            v.sort_by(f64::total_cmp);
            let (a, b) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(quantile_sorted(&v, a) <= quantile_sorted(&v, b));
        }

        #[test]
        fn variance_is_shift_invariant(v in proptest::collection::vec(-1e3f64..1e3, 2..50), s in -1e3f64..1e3) {
            let shifted: Vec<f64> = v.iter().map(|x| x + s).collect();
            let a = variance(&v);
            prop_assert!((a - variance(&shifted)).abs() <= 1e-8 * a.max(1.0));
        }
    }
}
