use serde::Serialize;

use super::{cutoff, dyadic_radii, Ball, ProfileRow};
use crate::corrector::CorrectorBundle;
use crate::elliptic::Extension;
use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::field::{CoefficientField, Grid, GridField};
use crate::stats::ols_through_origin;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HoleFilling {
    pub center: Vec<f64>,
    /// `(R, E(R))`, the last row at `R = √T`.
    pub rows: Vec<ProfileRow>,
    pub eps_hat: f64,
}

/// `χ_M((1/T)φ² + |∇φ + e|² + 1)` per cell, edges taken forward from the cell.
fn hole_filling_density(bundle: &CorrectorBundle, i: usize) -> Vec<f64> {
    let grid = bundle.grid();
    let field = &bundle.field;
    let h = grid.spacing();
    let dc = &bundle.directions[i];
    let phi = dc.phi.values();
    (0..grid.len())
        .map(|c| {
            if !field.matrix_mask[c] {
                return 0.0;
            }
            let mut s = phi[c] * phi[c] / bundle.t + 1.0;
            for k in 0..grid.dimension {
                if field.edge_active(k, c) {
                    s += (dc.xi[k] + (phi[grid.forward(c, k)] - phi[c]) / h).powi(2);
                }
            }
            s
        })
        .collect()
}

/// Periodic ball average of `density` at every cell, by FFT convolution.
fn ball_averages(grid: &Grid, density: &[f64], r: f64) -> Vec<f64> {
    let fft = FftNd::new(*grid);
    let origin = vec![0.5 * grid.spacing(); grid.dimension];
    let ball = Ball::new(grid, &origin, r);
    // kernel centered on cell 0
    let mut kernel = vec![0.0; grid.len()];
    for &c in &ball.cells {
        kernel[c] = 1.0 / ball.len() as f64;
    }
    let kh = fft.forward_real(&kernel);
    let mut dh = fft.forward_real(density);
    // correlation with a symmetric kernel equals convolution
    for (a, b) in dh.iter_mut().zip(&kh) {
        *a *= b.conj();
    }
    fft.inverse_real(dh)
}

/// Energy ratios across nested balls and the fitted exponent `ε̂` in
/// `E(R)/E(√T) ≈ (R/√T)^{εd}`. Without a center, the cell with the largest energy
/// density on the smallest ball is used.
pub fn hole_filling_ratio(
    bundle: &CorrectorBundle,
    i: usize,
    center: Option<&[f64]>,
) -> Result<HoleFilling> {
    let grid = bundle.grid();
    let d = grid.dimension;
    let sqrt_t = bundle.t.sqrt();
    if sqrt_t > 0.5 * grid.box_side * (1.0 + 1e-12) {
        return Err(Error::param(format!(
            "hole filling needs √T ≤ L/2, got √T = {sqrt_t} with L = {}",
            grid.box_side
        )));
    }
    let mut radii = dyadic_radii(grid, 1.0, sqrt_t);
    if radii
        .last()
        .map_or(true, |r| (r - sqrt_t).abs() > 1e-9 * sqrt_t)
    {
        radii.push(sqrt_t);
    }
    if radii.len() < 2 {
        return Err(Error::param(
            "hole filling needs at least two radii in [1, √T]",
        ));
    }
    let density = hole_filling_density(bundle, i);
    let center: Vec<f64> = match center {
        Some(c) => c.to_vec(),
        None => {
            let avg = ball_averages(grid, &density, radii[0]);
            let best = (0..avg.len()).fold(0, |b, c| if avg[c] > avg[b] { c } else { b });
            grid.cell_center(best)[..d].to_vec()
        }
    };
    let big = Ball::new(grid, &center, sqrt_t);
    let dist: Vec<f64> = (0..big.len()).map(|j| big.distance(j)).collect();
    let vol = grid.cell_volume();
    let rows: Vec<ProfileRow> = radii
        .iter()
        .map(|&r| {
            let e: f64 = (0..big.len())
                .filter(|&j| dist[j] <= r * (1.0 + 1e-12))
                .map(|j| density[big.cells[j]])
                .sum::<f64>()
                * vol;
            ProfileRow::new(r, e)
        })
        .collect();
    let top = rows.last().unwrap().value;
    let (x, y): (Vec<f64>, Vec<f64>) = rows[..rows.len() - 1]
        .iter()
        .map(|row| {
            (
                d as f64 * (row.radius / sqrt_t).ln(),
                (row.value / top).ln(),
            )
        })
        .unzip();
    let fit = ols_through_origin(&x, &y)?;
    Ok(HoleFilling {
        center,
        rows,
        eps_hat: fit.slope,
    })
}

/// `∫_{B_{R−ρ}} χ|∇(x_i + φ)|² / (ρ⁻² inf_c ∫_{B_R} χ|x_i + φ − c|²)`.
pub fn caccioppoli_check(
    bundle: &CorrectorBundle,
    i: usize,
    r: f64,
    rho: f64,
    center: &[f64],
) -> Result<f64> {
    let grid = bundle.grid();
    let h = grid.spacing();
    if !(h < rho && rho < r && r <= 0.5 * grid.box_side * (1.0 + 1e-12)) {
        return Err(Error::param(format!(
            "need h < ρ < R ≤ L/2, got ρ = {rho}, R = {r}"
        )));
    }
    let field = &bundle.field;
    let dc = &bundle.directions[i];
    let phi = dc.phi.values();
    let ball = Ball::new(grid, center, r);
    let mut num = 0.0;
    let mut vals = Vec::new();
    for (j, &c) in ball.cells.iter().enumerate() {
        if !field.matrix_mask[c] {
            continue;
        }
        vals.push(ball.offsets[j][i] + phi[c]);
        if ball.distance(j) <= (r - rho) * (1.0 + 1e-12) {
            for k in 0..grid.dimension {
                if field.edge_active(k, c) {
                    num += (dc.xi[k] + (phi[grid.forward(c, k)] - phi[c]) / h).powi(2);
                }
            }
        }
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(num / (var / (rho * rho)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightedMean {
    pub value: f64,
    /// `∫_{B_R} χ|u − F|² / inf_c ∫_{B_R} |u^ext − c|²` (zero when both vanish).
    pub poincare_ratio: f64,
}

/// `F(u) = ∫ η² χ u / ∫ η² χ` with the quartic cutoff of `B_{R/2}` in `B_R`.
pub fn weighted_mean(
    u: &GridField,
    field: &CoefficientField,
    r: f64,
    center: &[f64],
) -> Result<WeightedMean> {
    let grid = field.grid;
    if r > 0.5 * grid.box_side * (1.0 + 1e-12) {
        return Err(Error::param("weighted mean radius must not exceed L/2"));
    }
    let ext = Extension::new(field)?.apply(u.values());
    let u = u.values();
    let ball = Ball::new(&grid, center, r);
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, &c) in ball.cells.iter().enumerate() {
        if field.matrix_mask[c] {
            let w = cutoff(ball.distance(j), r).powi(2);
            num += w * u[c];
            den += w;
        }
    }
    if den == 0.0 {
        return Err(Error::param("cutoff support contains no matrix cell"));
    }
    let f = num / den;
    let dev: f64 = ball
        .cells
        .iter()
        .filter(|&&c| field.matrix_mask[c])
        .map(|&c| (u[c] - f).powi(2))
        .sum();
    let mean_ext = ball.cells.iter().map(|&c| ext[c]).sum::<f64>() / ball.len() as f64;
    let var_ext: f64 = ball
        .cells
        .iter()
        .map(|&c| (ext[c] - mean_ext).powi(2))
        .sum();
    // round-off floor relative to the size of u on the ball
    let floor = 1e-20 * ball.cells.iter().map(|&c| ext[c] * ext[c]).sum::<f64>();
    let poincare_ratio = if var_ext > floor {
        dev / var_ext
    } else if dev <= floor {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(WeightedMean {
        value: f,
        poincare_ratio,
    })
}

/// `ω_T(x) = exp(−|x|/(κ√T))` on `B_{L/2}(center)`, normalized to unit mass.
pub fn exponential_weight(grid: &Grid, center: &[f64], t: f64, kappa: f64) -> (Ball, Vec<f64>) {
    let ball = Ball::new(grid, center, 0.5 * grid.box_side);
    let scale = kappa * t.sqrt();
    let mut w: Vec<f64> = (0..ball.len())
        .map(|j| (-ball.distance(j) / scale).exp())
        .collect();
    let mass = w.iter().sum::<f64>() * grid.cell_volume();
    w.iter_mut().for_each(|v| *v /= mass);
    (ball, w)
}

/// `F_T = ∫ ω_T ((1/T)φ² + |∇φ|² + (1/T)|g|² + |∇g|²)`, summed over directions.
pub fn weighted_energy(bundle: &CorrectorBundle, kappa: f64, center: &[f64]) -> Result<f64> {
    if bundle.g.len() != bundle.dimension() {
        return Err(Error::param("weighted energy needs g_T in the bundle"));
    }
    let grid = bundle.grid();
    let field = &bundle.field;
    let h = grid.spacing();
    let t = bundle.t;
    let (ball, w) = exponential_weight(grid, center, t, kappa);
    let mut total = 0.0;
    for (dc, g) in bundle.directions.iter().zip(&bundle.g) {
        let phi = dc.phi.values();
        for (j, &c) in ball.cells.iter().enumerate() {
            let mut s = 0.0;
            if field.matrix_mask[c] {
                s += phi[c] * phi[c] / t;
                for k in 0..grid.dimension {
                    if field.edge_active(k, c) {
                        s += ((phi[grid.forward(c, k)] - phi[c]) / h).powi(2);
                    }
                }
            }
            for comp in &g.components {
                s += comp[c] * comp[c] / t;
                for k in 0..grid.dimension {
                    s += ((comp[grid.forward(c, k)] - comp[c]) / h).powi(2);
                }
            }
            total += w[j] * s;
        }
    }
    Ok(total * grid.cell_volume())
}
