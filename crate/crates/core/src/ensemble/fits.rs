use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{bootstrap, hazen_survival, mean, median, ols, variance, Estimate, LinearFit};

const LEVEL: f64 = 0.95;

/// Log-log regression of a per-group statistic against the group abscissa.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: Estimate,
    /// `(abscissa, statistic)` per group.
    pub points: Vec<(f64, f64)>,
    pub fit: LinearFit,
}

fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if ys.iter().any(|&y| !(y > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    ols(&lx, &ly).ok().map(|f| f.slope)
}

fn loglog_fit(
    groups: &[(f64, Vec<f64>)],
    stat: fn(&[f64]) -> f64,
    resamples: usize,
    seed: u64,
) -> Result<ScalingFit> {
    if groups.len() < 3 {
        return Err(Error::param("a scaling fit needs at least three groups"));
    }
    let xs: Vec<f64> = groups.iter().map(|g| g.0).collect();
    let ys: Vec<f64> = groups.iter().map(|g| stat(&g.1)).collect();
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let fit = ols(&lx, &ly)?;
    let sizes: Vec<usize> = groups.iter().map(|g| g.1.len()).collect();
    let mut buf = Vec::new();
    let slope = bootstrap(&sizes, resamples, seed, LEVEL, fit.slope, |idx| {
        let ys: Vec<f64> = groups
            .iter()
            .zip(idx)
            .map(|(g, ix)| {
                buf.clear();
                buf.extend(ix.iter().map(|&i| g.1[i]));
                stat(&buf)
            })
            .collect();
        loglog_slope(&xs, &ys)
    })?;
    Ok(ScalingFit {
        slope,
        points: xs.into_iter().zip(ys).collect(),
        fit,
    })
}

/// Slope of `log Var[X_L]` against `log L`, with a per-group bootstrap interval.
pub fn fit_variance_scaling(
    groups: &[(f64, Vec<f64>)],
    resamples: usize,
    seed: u64,
) -> Result<ScalingFit> {
    for (l, v) in groups {
        if v.len() < 2 || !(variance(v) > 0.0) {
            return Err(Error::Fit(format!("degenerate variance at L = {l}")));
        }
    }
    loglog_fit(groups, variance, resamples, seed)
}

/// Stretched-exponential tail fit `P(X > r) ≈ exp(−c r^γ)` against a power-law alternative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub gamma: Estimate,
    pub fit: LinearFit,
    pub finite: usize,
    /// `+∞` sentinels, excluded from the fit.
    pub infinite: usize,
    /// Survival-scale residuals of the stretched-exponential and power-law models on the fit window.
    pub stretched_rss: f64,
    pub power_rss: f64,
    /// `γ̂` interval excludes 0 and the stretched model beats the power law.
    pub stretched_exponential: bool,
}

fn tail_window(samples: &[f64]) -> Vec<(f64, f64)> {
    let med = median(samples);
    hazen_survival(samples)
        .into_iter()
        .filter(|&(r, s)| r >= med && r > 0.0 && s < 1.0)
        .collect()
}

fn tail_gamma(samples: &[f64]) -> Option<LinearFit> {
    let w = tail_window(samples);
    if w.len() < 3 {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = w.iter().map(|&(r, s)| (r.ln(), (-s.ln()).ln())).unzip();
    ols(&x, &y).ok()
}

/// Tail exponent of a sample with bootstrap interval; needs `min_finite` finite values.
pub fn rstar_tail_fit(
    samples: &[f64],
    min_finite: usize,
    resamples: usize,
    seed: u64,
) -> Result<TailFit> {
    let finite: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    let infinite = samples.len() - finite.len();
    if finite.len() < min_finite {
        return Err(Error::Fit(format!(
            "{} finite samples, need {min_finite}",
            finite.len()
        )));
    }
    let fit =
        tail_gamma(&finite).ok_or_else(|| Error::Fit("too few distinct tail points".into()))?;
    let mut buf = vec![0.0; finite.len()];
    let gamma = bootstrap(&[finite.len()], resamples, seed, LEVEL, fit.slope, |idx| {
        for (b, &i) in buf.iter_mut().zip(&idx[0]) {
            *b = finite[i];
        }
        tail_gamma(&buf).map(|f| f.slope)
    })?;

    let w = tail_window(&finite);
    let x: Vec<f64> = w.iter().map(|p| p.0.ln()).collect();
    let stretched_rss: f64 = w
        .iter()
        .zip(&x)
        .map(|(&(_, s), &lx)| (s - (-fit.predict(lx).exp()).exp()).powi(2))
        .sum();
    let ls: Vec<f64> = w.iter().map(|p| p.1.ln()).collect();
    let power = ols(&x, &ls)?;
    let power_rss: f64 = w
        .iter()
        .zip(&x)
        .map(|(&(_, s), &lx)| (s - power.predict(lx).exp()).powi(2))
        .sum();
    Ok(TailFit {
        gamma,
        fit,
        finite: finite.len(),
        infinite,
        stretched_rss,
        power_rss,
        stretched_exponential: gamma.excludes_zero() && stretched_rss <= power_rss,
    })
}

/// Decay exponent `ε̂ = −slope` of the per-`T` ensemble mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `None` when every mean vanishes.
    pub epsilon: Option<Estimate>,
    pub means: Vec<(f64, f64)>,
    pub monotone: bool,
    pub degenerate: bool,
}

pub fn fit_decay_in_t(groups: &[(f64, Vec<f64>)], resamples: usize, seed: u64) -> Result<DecayFit> {
    if groups.len() < 3 {
        return Err(Error::param("a decay fit needs at least three values of T"));
    }
    let means: Vec<(f64, f64)> = groups.iter().map(|(t, v)| (*t, mean(v))).collect();
    let monotone = means.windows(2).all(|w| w[1].1 <= w[0].1);
    let scale = means.iter().map(|m| m.1.abs()).fold(0.0, f64::max);
    if !(scale > 1e-300) {
        return Ok(DecayFit {
            epsilon: None,
            means,
            monotone,
            degenerate: true,
        });
    }
    let s = loglog_fit(groups, mean, resamples, seed)?;
    let e = Estimate {
        value: -s.slope.value,
        ci_low: -s.slope.ci_high,
        ci_high: -s.slope.ci_low,
        ..s.slope
    };
    Ok(DecayFit {
        epsilon: Some(e),
        means,
        monotone,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn block_means(rng: &mut ChaCha8Rng, l: usize, n: usize) -> Vec<f64> {
        // mean of l² i.i.d. uniforms: variance 1/(12 l²)
        (0..n)
            .map(|_| (0..l * l).map(|_| rng.gen::<f64>()).sum::<f64>() / (l * l) as f64)
            .collect()
    }

    #[test]
    fn iid_block_averages_scale_like_inverse_area() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let groups: Vec<(f64, Vec<f64>)> = [4usize, 8, 16, 32]
            .iter()
            .map(|&l| (l as f64, block_means(&mut rng, l, 400)))
            .collect();
        let f = fit_variance_scaling(&groups, 400, 1).unwrap();
        assert!(f.slope.contains(-2.0), "{:?}", f.slope);
        assert!((f.slope.value + 2.0).abs() < 0.15);
    }

    #[test]
    fn zero_variance_is_rejected() {
        let groups = vec![
            (1.0, vec![1.0; 5]),
            (2.0, vec![1.0, 2.0]),
            (4.0, vec![0.0, 1.0]),
        ];
        assert!(fit_variance_scaling(&groups, 100, 0).is_err());
    }

    #[test]
    fn exponential_tail_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..2000).map(|_| -rng.gen::<f64>().ln()).collect();
        let f = rstar_tail_fit(&x, 200, 400, 1).unwrap();
        assert!((f.gamma.value - 1.0).abs() < 0.15, "{:?}", f.gamma);
        assert!(f.stretched_exponential);
    }

    #[test]
    fn polynomial_tail_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<f64> = (0..2000).map(|_| 1.0 / rng.gen::<f64>()).collect();
        let f = rstar_tail_fit(&x, 200, 400, 1).unwrap();
        assert!(!f.stretched_exponential, "{f:?}");
        assert!(f.power_rss < f.stretched_rss);
    }

    #[test]
    fn infinite_sentinels_are_counted_not_fitted() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut x: Vec<f64> = (0..300).map(|_| -rng.gen::<f64>().ln()).collect();
        x.extend([f64::INFINITY; 7]);
        let f = rstar_tail_fit(&x, 200, 200, 1).unwrap();
        assert_eq!((f.finite, f.infinite), (300, 7));
        assert!(rstar_tail_fit(&x[..150], 200, 200, 1).is_err());
    }

    #[test]
    fn synthetic_power_decay_in_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let groups: Vec<(f64, Vec<f64>)> = [64.0f64, 256.0, 1024.0, 4096.0]
            .iter()
            .map(|&t| {
                (
                    t,
                    (0..50)
                        .map(|_| t.powf(-0.5) * (1.0 + 0.05 * (rng.gen::<f64>() - 0.5)))
                        .collect(),
                )
            })
            .collect();
        let f = fit_decay_in_t(&groups, 400, 2).unwrap();
        let e = f.epsilon.unwrap();
        assert!((e.value - 0.5).abs() < 0.05 && e.excludes_zero());
        assert!(f.monotone && !f.degenerate);
    }

    #[test]
    fn vanishing_means_are_flagged_degenerate() {
        let groups: Vec<(f64, Vec<f64>)> =
            [1.0, 2.0, 4.0].iter().map(|&t| (t, vec![0.0; 4])).collect();
        let f = fit_decay_in_t(&groups, 100, 0).unwrap();
        assert!(f.degenerate && f.epsilon.is_none());
    }
}
