use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{dyadic_radii, excess, Ball, ProfileRow};
use crate::corrector::{edge_gradient, CorrectorBundle};
use crate::elliptic::{MassiveOperator, SolveStats, SolverConfig};
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::geometry::wrap_delta;
use crate::stats::ols;

/// A function that is a-harmonic on `B_{3L/8}(center)`, forced from an outer annulus.
#[derive(Clone, Debug)]
pub struct AHarmonic {
    pub center: Vec<f64>,
    pub xi: Vec<f64>,
    /// Values on matrix cells, zero on holes.
    pub u: Vec<f64>,
    /// Forward differences on every edge.
    pub grad: Vec<Vec<f64>>,
    pub stats: SolveStats,
}

/// Solve the massive system at `T = 10⁶ L²` with right-hand side the divergence of
/// `a ξ 1_A`, `A = B_{L/2} \ B_{3L/8}`, for a random unit `ξ`.
pub fn a_harmonic_sample(
    field: &CoefficientField,
    cfg: &SolverConfig,
    seed: u64,
    center: &[f64],
) -> Result<AHarmonic> {
    let grid = field.grid;
    let d = grid.dimension;
    let l = grid.box_side;
    let h = grid.spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xi: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    xi.iter_mut().for_each(|x| *x /= norm);

    let (inner, outer) = (0.375 * l, 0.5 * l);
    // weighted conductance a_e ξ_k 1_A(midpoint of e)
    let forcing: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            (0..grid.len())
                .map(|c| {
                    let x = grid.cell_center(c);
                    let r2: f64 = (0..d)
                        .map(|a| {
                            let mid = x[a] + if a == k { 0.5 * h } else { 0.0 };
                            wrap_delta(mid - center[a], l).powi(2)
                        })
                        .sum();
                    let r = r2.sqrt();
                    if r >= inner && r <= outer {
                        field.edge_conductance[k][c] * xi[k]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let scale = h.powi(d as i32 - 1);
    let rhs: Vec<f64> = (0..grid.len())
        .map(|c| {
            if !field.matrix_mask[c] {
                return 0.0;
            }
            scale
                * (0..d)
                    .map(|k| forcing[k][c] - forcing[k][grid.backward(c, k)])
                    .sum::<f64>()
        })
        .collect();
    let t = 1e6 * l * l;
    let op = MassiveOperator::new(field, t, cfg.preconditioner)?;
    let (u, stats) = op.solve(&rhs, cfg, "a_harmonic")?;
    let grad = edge_gradient(&grid, &u);
    Ok(AHarmonic {
        center: center.to_vec(),
        xi,
        u,
        grad,
        stats,
    })
}

fn masked_energy(field: &CoefficientField, grad: &[Vec<f64>], ball: &Ball) -> f64 {
    let mut s = 0.0;
    for &c in &ball.cells {
        for (k, g) in grad.iter().enumerate() {
            if field.edge_active(k, c) {
                s += g[c] * g[c];
            }
        }
    }
    s / ball.len() as f64
}

/// `(r, fint_{B_r} χ|∇u|² / fint_{B_R} χ|∇u|²)` for dyadic `r ∈ [r_floor, R]`.
pub fn mean_value_check(
    field: &CoefficientField,
    grad: &[Vec<f64>],
    r_floor: f64,
    r_outer: f64,
    center: &[f64],
) -> Result<Vec<ProfileRow>> {
    let grid = field.grid;
    let outer = masked_energy(field, grad, &Ball::new(&grid, center, r_outer));
    if !(outer > 0.0) {
        return Err(Error::param("gradient vanishes on the outer ball"));
    }
    Ok(dyadic_radii(&grid, r_floor.max(grid.spacing()), r_outer)
        .into_iter()
        .map(|r| {
            ProfileRow::new(
                r,
                masked_energy(field, grad, &Ball::new(&grid, center, r)) / outer,
            )
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayProfile {
    /// `(r, Exc(∇u; B_r))`.
    pub rows: Vec<ProfileRow>,
    /// Log-log slope of the excess against `r`, an estimate of `2α`.
    pub slope: Option<f64>,
    /// All excesses below `1e-9`: `∇u` belongs to the trial family.
    pub exact_member: bool,
}

/// Excess at dyadic radii in `[max(r_floor, 2h), R]` and its log-log slope.
pub fn excess_decay_profile(
    grad: &[Vec<f64>],
    bundle: &CorrectorBundle,
    r_floor: f64,
    r_outer: f64,
    center: &[f64],
) -> Result<DecayProfile> {
    let grid = bundle.grid();
    let radii = dyadic_radii(grid, r_floor.max(2.0 * grid.spacing()), r_outer);
    let rows = radii
        .iter()
        .map(|&r| Ok(ProfileRow::new(r, excess(grad, bundle, r, center)?.value)))
        .collect::<Result<Vec<_>>>()?;
    let exact_member = rows.iter().all(|r| r.value <= 1e-9);
    let slope = if exact_member || rows.len() < 2 {
        None
    } else {
        let (x, y): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.value > 0.0)
            .map(|r| (r.radius.ln(), r.value.ln()))
            .unzip();
        ols(&x, &y).ok().map(|f| f.slope)
    };
    Ok(DecayProfile {
        rows,
        slope,
        exact_member,
    })
}
