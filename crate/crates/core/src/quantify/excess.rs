use serde::Serialize;

use super::{corrected_gradient, Ball};
use crate::corrector::CorrectorBundle;
use crate::elliptic::{cholesky_factor, cholesky_solve};
use crate::error::{Error, Result};

const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Excess {
    pub value: f64,
    /// Minimizing slope `ξ = G⁻¹ b`.
    pub xi: Vec<f64>,
    /// Amount clamped away when round-off made the raw value negative.
    pub clamped: f64,
    pub gram_condition: f64,
}

/// `Σ_i ξ_i (e_i + ∇φ_i)` on every edge: the gradient of `x·ξ + φ_ξ`.
pub fn corrected_affine_gradient(bundle: &CorrectorBundle, xi: &[f64]) -> Vec<Vec<f64>> {
    let grid = bundle.grid();
    let d = grid.dimension;
    let mut out = vec![vec![0.0; grid.len()]; d];
    for (i, dc) in bundle.directions.iter().enumerate() {
        if xi[i] == 0.0 {
            continue;
        }
        let g = corrected_gradient(grid, dc.phi.values(), &dc.xi);
        for k in 0..d {
            for c in 0..grid.len() {
                out[k][c] += xi[i] * g[k][c];
            }
        }
    }
    out
}

/// Eigenvalues of a small symmetric matrix (cyclic Jacobi).
pub(crate) fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j].powi(2))
            .sum();
        if off
            < 1e-30
                * (0..n)
                    .map(|i| m[i * n + i].powi(2))
                    .sum::<f64>()
                    .max(1e-300)
        {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).collect()
}

/// Tilt-minimized distance of `∇u` from `{ξ + ∇φ_ξ}` over `B_r(center)`.
///
/// `grad_u[k][c]` is the forward difference along `k` from cell `c`; only active
/// (matrix-matrix) edges enter.
pub fn excess(
    grad_u: &[Vec<f64>],
    bundle: &CorrectorBundle,
    r: f64,
    center: &[f64],
) -> Result<Excess> {
    let grid = bundle.grid();
    let d = grid.dimension;
    let h = grid.spacing();
    if r < 2.0 * h * (1.0 - 1e-12) {
        return Err(Error::param(format!(
            "excess radius {r} below 2h = {}",
            2.0 * h
        )));
    }
    let field = &bundle.field;
    let ball = Ball::new(grid, center, r);
    let mut gram = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    let mut uu = 0.0;
    let mut w = vec![0.0; d];
    for &c in &ball.cells {
        for k in 0..d {
            if !field.edge_active(k, c) {
                continue;
            }
            let f = grid.forward(c, k);
            for (i, dc) in bundle.directions.iter().enumerate() {
                let phi = dc.phi.values();
                w[i] = dc.xi[k] + (phi[f] - phi[c]) / h;
            }
            let g = grad_u[k][c];
            uu += g * g;
            for i in 0..d {
                b[i] += g * w[i];
                for j in 0..d {
                    gram[i * d + j] += w[i] * w[j];
                }
            }
        }
    }
    let count = ball.len() as f64;
    gram.iter_mut().for_each(|v| *v /= count);
    b.iter_mut().for_each(|v| *v /= count);
    uu /= count;

    let eig = symmetric_eigenvalues(&gram, d);
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &e| (l.min(e), h.max(e)));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularGram(cond));
    }
    let mut l = gram.clone();
    cholesky_factor(&mut l, d).ok_or(Error::SingularGram(cond))?;
    let mut xi = b.clone();
    cholesky_solve(&l, d, &mut xi);
    let raw = uu - b.iter().zip(&xi).map(|(x, y)| x * y).sum::<f64>();
    Ok(Excess {
        value: raw.max(0.0),
        xi,
        clamped: (-raw).max(0.0),
        gram_condition: cond,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrector::{compute_bundle, BundleParts};
    use crate::elliptic::SolverConfig;
    use crate::field::{rasterize, Profile};
    use crate::geometry::{sample_lattice_iid, LatticeParams, RadiusLaw};
    use std::sync::Arc;

    fn bundle(n: usize, seed: u64) -> CorrectorBundle {
        let p = LatticeParams {
            box_side: 4.0,
            dimension: 2,
            radius_law: RadiusLaw::Uniform { lo: 0.0, hi: 0.2 },
            diameter_cap: 0.5,
            separation: None,
        };
        let set = sample_lattice_iid(&p, seed).unwrap();
        let f = Arc::new(rasterize(&set, n, &Profile::default()).unwrap());
        compute_bundle(
            f,
            4.0,
            &SolverConfig::default().with_tolerance(1e-12),
            BundleParts::FLUX_ONLY,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn trial_family_members_have_zero_excess() {
        let b = bundle(32, 1);
        let xi0 = [0.7, -1.3];
        let g = corrected_affine_gradient(&b, &xi0);
        let e = excess(&g, &b, 1.0, &[2.0, 2.0]).unwrap();
        assert!(e.value <= 1e-9, "{}", e.value);
        assert!((e.xi[0] - 0.7).abs() < 1e-6 && (e.xi[1] + 1.3).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_has_zero_excess() {
        let b = bundle(32, 2);
        let g = vec![vec![0.0; 32 * 32]; 2];
        let e = excess(&g, &b, 1.0, &[0.0, 0.0]).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.xi, vec![0.0, 0.0]);
    }

    #[test]
    fn matches_grid_search() {
        let b = bundle(32, 3);
        let h = 4.0 / 32.0;
        let r = 8.0 * h;
        let grid = *b.grid();
        let g: Vec<Vec<f64>> = (0..2)
            .map(|k| {
                (0..grid.len())
                    .map(|c| ((c * (k + 7)) % 11) as f64 / 11.0 - 0.4)
                    .collect()
            })
            .collect();
        let e = excess(&g, &b, r, &[1.5, 2.5]).unwrap();
        // brute force over a grid of slopes around the optimum
        let ball = Ball::new(&grid, &[1.5, 2.5], r);
        let eval = |xi: [f64; 2]| {
            let aff = corrected_affine_gradient(&b, &xi);
            let mut s = 0.0;
            for &c in &ball.cells {
                for k in 0..2 {
                    if b.field.edge_active(k, c) {
                        s += (g[k][c] - aff[k][c]).powi(2);
                    }
                }
            }
            s / ball.len() as f64
        };
        let step = 1e-3;
        let mut best = f64::INFINITY;
        for i in -20..=20 {
            for j in -20..=20 {
                let xi = [
                    (e.xi[0] / step).round() * step + i as f64 * step,
                    (e.xi[1] / step).round() * step + j as f64 * step,
                ];
                best = best.min(eval(xi));
            }
        }
        assert!(best >= e.value - 1e-12);
        assert!(best - e.value <= 1e-5, "{best} vs {}", e.value);
    }

    #[test]
    fn adding_a_trial_member_leaves_excess_unchanged() {
        let b = bundle(32, 4);
        let grid = *b.grid();
        let g: Vec<Vec<f64>> = (0..2)
            .map(|k| {
                (0..grid.len())
                    .map(|c| ((c * (k + 3)) % 5) as f64)
                    .collect()
            })
            .collect();
        let shift = corrected_affine_gradient(&b, &[2.0, 0.5]);
        let g2: Vec<Vec<f64>> = g
            .iter()
            .zip(&shift)
            .map(|(a, s)| a.iter().zip(s).map(|(x, y)| x + y).collect())
            .collect();
        let e1 = excess(&g, &b, 1.0, &[1.0, 1.0]).unwrap();
        let e2 = excess(&g2, &b, 1.0, &[1.0, 1.0]).unwrap();
        assert!((e1.value - e2.value).abs() <= 1e-8 * e1.value.max(1.0));
    }

    #[test]
    fn radius_below_two_cells_is_rejected() {
        let b = bundle(32, 5);
        let g = vec![vec![0.0; 32 * 32]; 2];
        assert!(excess(&g, &b, 0.2, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn jacobi_eigenvalues() {
        let e = symmetric_eigenvalues(&[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0], 3);
        let mut e = e;
        e.sort_by(f64::total_cmp);
        assert!(
            (e[0] - 1.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12 && (e[2] - 5.0).abs() < 1e-12
        );
    }
}
