use serde::Serialize;

use super::{Ball, ProfileRow, QuantifyConfig};
use crate::corrector::CorrectorBundle;
use crate::error::{Error, Result};
use crate::field::Grid;
use crate::stats::{bic, ols};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityRadius {
    /// `None` stands for `+∞`: the threshold fails at the largest listed radius.
    pub rstar: Option<f64>,
    #[serde(rename = "C")]
    pub threshold_c: f64,
    /// `(R, D(R))` for every listed radius.
    pub profile: Vec<ProfileRow>,
}

/// `D(R) = R⁻² fint_{B_R} |v − fint_{B_R} v|²` with the Euclidean norm over all components.
pub fn oscillation_profile(
    grid: &Grid,
    components: &[&[f64]],
    center: &[f64],
    radii: &[f64],
) -> Vec<ProfileRow> {
    let rmax = radii.iter().copied().fold(0.0, f64::max);
    let ball = Ball::new(grid, center, rmax);
    let dist: Vec<f64> = (0..ball.len()).map(|i| ball.distance(i)).collect();
    radii
        .iter()
        .map(|&r| {
            let inside: Vec<usize> = (0..ball.len())
                .filter(|&i| dist[i] <= r * (1.0 + 1e-12))
                .map(|i| ball.cells[i])
                .collect();
            let m = inside.len() as f64;
            let total: f64 = components
                .iter()
                .map(|v| {
                    let mean = inside.iter().map(|&c| v[c]).sum::<f64>() / m;
                    inside.iter().map(|&c| (v[c] - mean).powi(2)).sum::<f64>() / m
                })
                .sum();
            ProfileRow::new(r, total / (r * r))
        })
        .collect()
}

/// Smallest listed `r` with `D(R) ≤ 1/C` for every listed `R ≥ r`.
pub fn rstar_from_profile(profile: &[ProfileRow], threshold_c: f64) -> Option<f64> {
    let limit = 1.0 / threshold_c;
    let mut best = None;
    for row in profile.iter().rev() {
        if row.value <= limit {
            best = Some(row.radius);
        } else {
            break;
        }
    }
    best
}

/// Regularity radius of `(φ^ext, σ)` around `center`.
pub fn regularity_radius(
    bundle: &CorrectorBundle,
    cfg: &QuantifyConfig,
    center: &[f64],
) -> Result<RegularityRadius> {
    if bundle.sigma.len() != bundle.dimension() {
        return Err(Error::param("regularity radius needs σ in the bundle"));
    }
    let grid = bundle.grid();
    let mut comps: Vec<&[f64]> = (0..bundle.dimension()).map(|i| bundle.phi_ext(i)).collect();
    for s in &bundle.sigma {
        comps.extend(s.components.iter().map(|c| c.as_slice()));
    }
    let radii = cfg.radii_for(grid);
    let profile = oscillation_profile(grid, &comps, center, &radii);
    Ok(RegularityRadius {
        rstar: rstar_from_profile(&profile, cfg.rstar_threshold_c),
        threshold_c: cfg.rstar_threshold_c,
        profile,
    })
}

fn shell_directions(d: usize) -> Vec<[f64; 3]> {
    if d == 2 {
        (0..8)
            .map(|j| {
                let a = std::f64::consts::TAU * j as f64 / 8.0;
                [a.cos(), a.sin(), 0.0]
            })
            .collect()
    } else {
        let mut out = Vec::new();
        for k in 0..3 {
            for s in [-1.0, 1.0] {
                let mut v = [0.0; 3];
                v[k] = s;
                out.push(v);
            }
        }
        let r = 1.0 / 3f64.sqrt();
        for sx in [-r, r] {
            for sy in [-r, r] {
                for sz in [-r, r] {
                    out.push([sx, sy, sz]);
                }
            }
        }
        out
    }
}

/// `(|x|, sqrt(shell-average of fint_{B_1(x)} |φ|²))` on a dyadic schedule of offsets.
pub fn corrector_growth_profile(grid: &Grid, phi_ext: &[f64], center: &[f64]) -> Vec<ProfileRow> {
    let d = grid.dimension;
    let mut offsets = vec![0.0];
    offsets.extend(super::dyadic_radii(grid, 1.0, 0.5 * grid.box_side - 1.0));
    let dirs = shell_directions(d);
    offsets
        .into_iter()
        .map(|dist| {
            let dirs_used: &[[f64; 3]] = if dist == 0.0 { &dirs[..1] } else { &dirs };
            let acc: f64 = dirs_used
                .iter()
                .map(|u| {
                    let x: Vec<f64> = (0..d).map(|k| center[k] + dist * u[k]).collect();
                    let ball = Ball::new(grid, &x, 1.0);
                    ball.cells.iter().map(|&c| phi_ext[c].powi(2)).sum::<f64>() / ball.len() as f64
                })
                .sum::<f64>()
                / dirs_used.len() as f64;
            ProfileRow::new(dist, acc.sqrt())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthRegime {
    Constant,
    Logarithmic,
    Power,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthFit {
    pub regime: GrowthRegime,
    /// Exponent of the power-law model.
    pub theta: f64,
    /// `(constant, logarithmic, power)` residual sums of squares.
    pub rss: [f64; 3],
}

/// Select among `c`, `c ln(2 + r)` and `c r^θ` by BIC on rows with positive radius.
pub fn fit_growth_regime(rows: &[ProfileRow]) -> Result<GrowthFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.radius > 0.0 && r.value > 0.0)
        .map(|r| (r.radius, r.value))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Fit("growth fit needs three positive rows".into()));
    }
    let m = pts.len();
    let scale: f64 = pts.iter().map(|p| p.1 * p.1).sum();

    let c0 = pts.iter().map(|p| p.1).sum::<f64>() / m as f64;
    let rss0: f64 = pts.iter().map(|p| (p.1 - c0).powi(2)).sum();

    let lx: Vec<f64> = pts.iter().map(|p| (2.0 + p.0).ln()).collect();
    let c1 = pts.iter().zip(&lx).map(|(p, l)| p.1 * l).sum::<f64>()
        / lx.iter().map(|l| l * l).sum::<f64>();
    let rss1: f64 = pts
        .iter()
        .zip(&lx)
        .map(|(p, l)| (p.1 - c1 * l).powi(2))
        .sum();

    let logx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let logy: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let pf = ols(&logx, &logy)?;
    let rss2: f64 = pts
        .iter()
        .map(|p| (p.1 - pf.intercept.exp() * p.0.powf(pf.slope)).powi(2))
        .sum();

    let scores = [
        bic(rss0, m, 1, scale),
        bic(rss1, m, 1, scale),
        bic(rss2, m, 2, scale),
    ];
    let best = (0..3).fold(0, |b, i| if scores[i] < scores[b] - 1e-9 { i } else { b });
    let regime = [
        GrowthRegime::Constant,
        GrowthRegime::Logarithmic,
        GrowthRegime::Power,
    ][best];
    Ok(GrowthFit {
        regime,
        theta: pf.slope,
        rss: [rss0, rss1, rss2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_fields_give_the_floor_radius() {
        let g = Grid::new(2, 64, 16.0).unwrap();
        let z = vec![0.0; g.len()];
        let radii = [1.0, 2.0, 4.0, 8.0];
        let p = oscillation_profile(&g, &[&z, &z], &[0.0, 0.0], &radii);
        assert_eq!(rstar_from_profile(&p, 100.0), Some(1.0));
    }

    #[test]
    fn linear_field_matches_ball_second_moment() {
        let g = Grid::new(2, 256, 32.0).unwrap();
        let center = [16.0, 16.0];
        let s = 0.05;
        let phi: Vec<f64> = (0..g.len()).map(|c| s * g.cell_center(c)[0]).collect();
        let radii = [2.0, 4.0, 8.0];
        let p = oscillation_profile(&g, &[&phi], &center, &radii);
        for row in &p {
            // continuum: fint_{B_R} x₁² = R²/4
            let expect = s * s / 4.0;
            assert!(
                (row.value / expect - 1.0).abs() < 0.02,
                "{} vs {expect}",
                row.value
            );
        }
        // s²/4 = 6.25e-4: below 1/C for C = 1000, above for C = 2000
        assert_eq!(rstar_from_profile(&p, 1000.0), Some(2.0));
        assert_eq!(rstar_from_profile(&p, 2000.0), None);
    }

    #[test]
    fn rstar_is_monotone_in_c() {
        let rows: Vec<ProfileRow> = [(1.0, 0.5), (2.0, 0.02), (4.0, 0.004), (8.0, 0.001)]
            .iter()
            .map(|&(r, v)| ProfileRow::new(r, v))
            .collect();
        let mut last = 0.0;
        for c in [1.0, 10.0, 100.0, 500.0, 900.0] {
            let r = rstar_from_profile(&rows, c).unwrap_or(f64::INFINITY);
            assert!(r >= last);
            last = r;
        }
        assert_eq!(rstar_from_profile(&rows, 2000.0), None);
    }

    #[test]
    fn constant_corrector_has_flat_growth() {
        let g = Grid::new(2, 64, 16.0).unwrap();
        let phi = vec![-2.5; g.len()];
        for row in corrector_growth_profile(&g, &phi, &[8.0, 8.0]) {
            assert!((row.value - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_corrector_grows_affinely() {
        let g = Grid::new(2, 256, 32.0).unwrap();
        let center = [16.0, 16.0];
        let phi: Vec<f64> = (0..g.len()).map(|c| g.cell_center(c)[0] - 16.0).collect();
        for row in corrector_growth_profile(&g, &phi, &center) {
            // shell average of (x₁ + y₁)² over B_1(x): |x|²/2 + 1/4
            let expect =
                (row.radius.powi(2) / if row.radius == 0.0 { 1.0 } else { 2.0 } + 0.25).sqrt();
            assert!(
                (row.value / expect - 1.0).abs() < 0.02,
                "{row:?} vs {expect}"
            );
        }
    }

    #[test]
    fn regime_selection_on_synthetic_models() {
        let r = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
        let cases: [(fn(f64) -> f64, GrowthRegime); 3] = [
            (|_| 1.7, GrowthRegime::Constant),
            (|r| 0.8 * (2.0 + r).ln(), GrowthRegime::Logarithmic),
            (|r| 0.3 * r.powf(0.6), GrowthRegime::Power),
        ];
        for (f, want) in cases {
            let rows: Vec<ProfileRow> = r.iter().map(|&x| ProfileRow::new(x, f(x))).collect();
            assert_eq!(fit_growth_regime(&rows).unwrap().regime, want);
        }
    }
}
