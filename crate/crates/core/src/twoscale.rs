//! Two-scale expansion experiment on the unit torus.
//!
//! One microstructure tile of side `L_m` (lattice units) is sampled, rasterized with
//! `cells_per_eps` cells per side and repeated `1/ε` times per axis, so the tile maps to
//! physical size `ε` and lattice lengths scale by `s = ε/L_m`. The heterogeneous problem
//! `−∇·a_ε∇u_ε = χ_M (f − f̄_M)` with `f = ∇·g` is compared with
//! `−∇·a_hom∇u_hom = θ f` through `z_ε = u_ε − (u_hom,ε + s φ_i(·/s) ∂_i u_hom,ε)`.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::corrector::{compute_bundle, homogenized_estimate, BundleParts, CorrectorBundle};
use crate::elliptic::{MassiveOperator, SolveStats, SolverConfig};
use crate::ensemble::{run_indexed, split_seed};
use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::field::{rasterize, CoefficientField, Grid, GridField, Profile, Support};
use crate::geometry::{sample, GeometryParams};
use crate::quantify::Ball;
use crate::stats::{bootstrap, mean, median, ols, Estimate, LinearFit, DEFAULT_RESAMPLES};

/// Divergence-form forcing `g` on the unit torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Forcing {
    /// `g_k(x) = A sin(2π x_k) cos(2π x_{k+1})`.
    Trigonometric {
        amplitude: f64,
    },
    Zero,
}

impl Default for Forcing {
    fn default() -> Self {
        Forcing::Trigonometric { amplitude: 1.0 }
    }
}

impl Forcing {
    pub fn g(&self, x: &[f64], k: usize) -> f64 {
        match *self {
            Forcing::Trigonometric { amplitude } => {
                let d = x.len();
                amplitude * (2.0 * PI * x[k]).sin() * (2.0 * PI * x[(k + 1) % d]).cos()
            }
            Forcing::Zero => 0.0,
        }
    }

    /// `f = ∇·g`, exact.
    pub fn divergence(&self, x: &[f64]) -> f64 {
        match *self {
            Forcing::Trigonometric { amplitude } => {
                let d = x.len();
                (0..d)
                    .map(|k| {
                        2.0 * PI
                            * amplitude
                            * (2.0 * PI * x[k]).cos()
                            * (2.0 * PI * x[(k + 1) % d]).cos()
                    })
                    .sum()
            }
            Forcing::Zero => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoScaleConfig {
    /// Microstructure law; its box side is the tile side `L_m`.
    pub geometry: GeometryParams,
    #[serde(default)]
    pub profile: Profile,
    pub epsilon_list: Vec<f64>,
    #[serde(default = "default_cells_per_eps")]
    pub cells_per_eps: usize,
    #[serde(default)]
    pub forcing: Forcing,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    pub master_seed: u64,
    /// Corrector `T` in lattice units; defaults to `L_m²`.
    #[serde(default, rename = "corrector_T")]
    pub corrector_t: Option<f64>,
    /// `T` of the heterogeneous solve on the unit torus.
    #[serde(default = "default_eps_t", rename = "eps_problem_T")]
    pub eps_problem_t: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
}

fn default_cells_per_eps() -> usize {
    16
}

fn default_realizations() -> usize {
    1
}

fn default_eps_t() -> f64 {
    1e6
}

fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}

impl TwoScaleConfig {
    pub fn tile_side(&self) -> f64 {
        self.geometry.box_side()
    }

    pub fn corrector_t(&self) -> f64 {
        self.corrector_t.unwrap_or(self.tile_side().powi(2))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.profile.validate(self.geometry.dimension())?;
        self.solver.validate()?;
        if self.cells_per_eps < 8 || !self.cells_per_eps.is_power_of_two() {
            return Err(Error::param(
                "cells_per_eps must be a power of two, at least 8",
            ));
        }
        if self.epsilon_list.is_empty() {
            return Err(Error::param("epsilon_list must not be empty"));
        }
        if self.epsilon_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::param("epsilon_list must be strictly decreasing"));
        }
        for &e in &self.epsilon_list {
            tiles_per_side(e)?;
        }
        if self.realizations == 0 {
            return Err(Error::param("realizations must be at least 1"));
        }
        if !(self.corrector_t() > 0.0 && self.eps_problem_t > 0.0) {
            return Err(Error::param(
                "corrector_T and eps_problem_T must be positive",
            ));
        }
        if self.bootstrap_resamples < 200 {
            return Err(Error::param("bootstrap_resamples must be at least 200"));
        }
        Ok(())
    }
}

fn tiles_per_side(eps: f64) -> Result<usize> {
    let m = (1.0 / eps).round();
    if !(eps > 0.0 && eps <= 1.0)
        || ((1.0 / eps) - m).abs() > 1e-9 * m
        || !(m as usize).is_power_of_two()
    {
        return Err(Error::param(format!("ε = {eps} must be 1/2^k")));
    }
    Ok(m as usize)
}

/// Repeat a tile `copies` times per axis on a torus of side `box_side`.
pub fn tile_field(
    tile: &CoefficientField,
    copies: usize,
    box_side: f64,
) -> Result<CoefficientField> {
    let tg = tile.grid;
    let m = tg.n();
    let grid = Grid::new(tg.dimension, m * copies, box_side)?;
    let map = |c: usize| -> usize {
        let mut idx = [0i64; 3];
        for (a, slot) in idx.iter_mut().enumerate().take(grid.dimension) {
            *slot = (grid.coord(c, a) % m) as i64;
        }
        tg.index_wrapped(&idx[..grid.dimension])
    };
    let mask: Vec<bool> = (0..grid.len()).map(|c| tile.matrix_mask[map(c)]).collect();
    let values: Vec<f64> = (0..grid.len()).map(|c| tile.cell_value[map(c)]).collect();
    Ok(CoefficientField::from_mask(grid, mask, values))
}

/// `h^d χ_M (∇·g − mean_M ∇·g)`: the forcing acts on the matrix with no flux through hole boundaries.
pub fn matrix_rhs(field: &CoefficientField, forcing: &Forcing) -> Vec<f64> {
    let grid = field.grid;
    let f: Vec<f64> = (0..grid.len())
        .map(|c| forcing.divergence(&grid.cell_center(c)[..grid.dimension]))
        .collect();
    let m = field.matrix_cell_count();
    let fbar = if m > 0 {
        (0..grid.len())
            .filter(|&c| field.matrix_mask[c])
            .map(|c| f[c])
            .sum::<f64>()
            / m as f64
    } else {
        0.0
    };
    let vol = grid.cell_volume();
    (0..grid.len())
        .map(|c| {
            if field.matrix_mask[c] {
                vol * (f[c] - fbar)
            } else {
                0.0
            }
        })
        .collect()
}

/// Solve the heterogeneous problem; zero mean on the matrix.
pub fn solve_eps_problem(
    field: &CoefficientField,
    forcing: &Forcing,
    t: f64,
    cfg: &SolverConfig,
) -> Result<(GridField, SolveStats)> {
    let grid = field.grid;
    let m = field.matrix_cell_count();
    let rhs = matrix_rhs(field, forcing);
    let op = MassiveOperator::new(field, t, cfg.preconditioner)?;
    let (mut u, stats) = op.solve(&rhs, cfg, "eps_problem")?;
    if m > 0 {
        let mu = (0..grid.len())
            .filter(|&c| field.matrix_mask[c])
            .map(|c| u[c])
            .sum::<f64>()
            / m as f64;
        for c in 0..grid.len() {
            if field.matrix_mask[c] {
                u[c] -= mu;
            }
        }
    }
    Ok((GridField::scalar(grid, Support::MatrixOnly, u), stats))
}

fn signed_mode(grid: &Grid, i: usize, axis: usize) -> f64 {
    let n = grid.n();
    let m = grid.coord(i, axis);
    if m > n / 2 {
        m as f64 - n as f64
    } else {
        m as f64
    }
}

/// `−∇·a_hom∇u = θ f` with the continuous symbol; zero mean.
pub fn homogenized_solution(
    grid: &Grid,
    a_hom: &[Vec<f64>],
    theta: f64,
    forcing: &Forcing,
) -> Vec<f64> {
    let d = grid.dimension;
    let fft = FftNd::new(*grid);
    let f: Vec<f64> = (0..grid.len())
        .map(|c| forcing.divergence(&grid.cell_center(c)[..d]))
        .collect();
    let mut z = fft.forward_real(&f);
    let w = 2.0 * PI / grid.box_side;
    for (i, zi) in z.iter_mut().enumerate() {
        let k: Vec<f64> = (0..d).map(|a| w * signed_mode(grid, i, a)).collect();
        let sym: f64 = (0..d)
            .flat_map(|j| (0..d).map(move |l| (j, l)))
            .map(|(j, l)| 0.5 * (a_hom[j][l] + a_hom[l][j]) * k[j] * k[l])
            .sum();
        *zi = if sym > 0.0 {
            *zi * (theta / sym)
        } else {
            Complex64::default()
        };
    }
    fft.inverse_real(z)
}

/// Periodic discrete ball average of radius `r` (FFT convolution).
pub fn ball_average(grid: &Grid, u: &[f64], r: f64) -> Vec<f64> {
    let fft = FftNd::new(*grid);
    let mut kernel = vec![0.0; grid.len()];
    // cell centers sit at (i + 1/2)h, so center the stencil on the cell containing the origin
    let shift: Vec<f64> = vec![0.5 * grid.spacing(); grid.dimension];
    let stencil = Ball::new(grid, &shift, r);
    let w = 1.0 / stencil.len() as f64;
    for &c in &stencil.cells {
        kernel[c] = w;
    }
    let ku = fft.forward_real(&kernel);
    let mut uu = fft.forward_real(u);
    for (a, b) in uu.iter_mut().zip(&ku) {
        *a *= b;
    }
    fft.inverse_real(uu)
}

/// `‖χ_M ∇z_ε‖₂` over active edges.
pub fn two_scale_defect(
    u_eps: &GridField,
    u_hom: &[f64],
    bundle: &CorrectorBundle,
    field: &CoefficientField,
    eps: f64,
) -> Result<f64> {
    let grid = field.grid;
    let tile = bundle.grid();
    let copies = tiles_per_side(eps)?;
    if grid.n() != tile.n() * copies
        || (grid.box_side * eps - 1.0 * grid.box_side / copies as f64).abs() > 1e-12
    {
        return Err(Error::ScaleMismatch(format!(
            "grid of {} cells does not hold {copies} tiles of {} cells",
            grid.n(),
            tile.n()
        )));
    }
    if u_eps.grid != grid || u_hom.len() != grid.len() {
        return Err(Error::ScaleMismatch(
            "solution and field live on different grids".into(),
        ));
    }
    let d = grid.dimension;
    let h = grid.spacing();
    let s = grid.box_side / copies as f64 / tile.box_side;
    let m = tile.n();
    let smooth = ball_average(&grid, u_hom, eps);
    let mut z = vec![0.0; grid.len()];
    let ue = u_eps.values();
    for c in 0..grid.len() {
        if !field.matrix_mask[c] {
            continue;
        }
        let mut idx = [0i64; 3];
        for (a, slot) in idx.iter_mut().enumerate().take(d) {
            *slot = (grid.coord(c, a) % m) as i64;
        }
        let tc = tile.index_wrapped(&idx[..d]);
        let mut corr = 0.0;
        for (i, dc) in bundle.directions.iter().enumerate() {
            let di = (smooth[grid.forward(c, i)] - smooth[grid.backward(c, i)]) / (2.0 * h);
            corr += dc.phi.values()[tc] * di;
        }
        z[c] = ue[c] - (smooth[c] + s * corr);
    }
    let mut acc = 0.0;
    for k in 0..d {
        for c in 0..grid.len() {
            if field.edge_active(k, c) {
                acc += ((z[grid.forward(c, k)] - z[c]) / h).powi(2);
            }
        }
    }
    Ok((acc * grid.cell_volume()).sqrt())
}

fn grad_g_norm(grid: &Grid, forcing: &Forcing) -> f64 {
    let d = grid.dimension;
    let h = grid.spacing();
    let mut acc = 0.0;
    for k in 0..d {
        let g: Vec<f64> = (0..grid.len())
            .map(|c| forcing.g(&grid.cell_center(c)[..d], k))
            .collect();
        for a in 0..d {
            for c in 0..grid.len() {
                acc += ((g[grid.forward(c, a)] - g[c]) / h).powi(2);
            }
        }
    }
    (acc * grid.cell_volume()).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectRow {
    pub realization: usize,
    pub epsilon: f64,
    pub defect: f64,
    pub grad_g_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: Estimate,
    /// Log-log fit of the per-ε geometric mean over realizations.
    pub fit: LinearFit,
    pub power_rss: f64,
    pub log_corrected_rss: f64,
    /// `c ε ln(2 + 1/ε)` leaves a smaller log-residual than `c ε^ρ`.
    pub log_corrected_preferred: bool,
    pub realizations: usize,
}

fn curve(eps: &[f64], by_real: &[Vec<f64>], pick: &[usize]) -> Vec<f64> {
    (0..eps.len())
        .map(|j| mean(&pick.iter().map(|&r| by_real[r][j].ln()).collect::<Vec<_>>()))
        .collect()
}

// two-sided 95% Student quantiles, 1..=10 degrees of freedom
const STUDENT_95: [f64; 10] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
];

/// Rate `ρ̂` of the defect in `ε`, bootstrapped over realizations.
pub fn rate_fit(rows: &[DefectRow], resamples: usize, seed: u64) -> Result<RateFit> {
    let mut eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();
    if eps.len() < 3 {
        return Err(Error::param("rate fit needs at least three values of ε"));
    }
    let mut reals: Vec<usize> = rows.iter().map(|r| r.realization).collect();
    reals.sort_unstable();
    reals.dedup();
    let by_real: Vec<Vec<f64>> = reals
        .iter()
        .map(|&k| {
            eps.iter()
                .map(|&e| {
                    rows.iter()
                        .find(|r| r.realization == k && r.epsilon == e)
                        .map(|r| r.defect)
                        .ok_or_else(|| Error::param(format!("realization {k} misses ε = {e}")))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    if by_real.iter().flatten().any(|&v| !(v > 0.0)) {
        return Err(Error::Fit(
            "defects must be positive for a log-log fit".into(),
        ));
    }
    let lx: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let all: Vec<usize> = (0..reals.len()).collect();
    let ly = curve(&eps, &by_real, &all);
    let fit = ols(&lx, &ly)?;
    let rate = if reals.len() >= 2 {
        bootstrap(&[reals.len()], resamples, seed, 0.95, fit.slope, |idx| {
            ols(&lx, &curve(&eps, &by_real, &idx[0]))
                .ok()
                .map(|f| f.slope)
        })?
    } else {
        let dof = lx.len() - 2;
        let mx = mean(&lx);
        let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
        let se = (fit.rss / dof as f64 / sxx).sqrt();
        let q = STUDENT_95.get(dof - 1).copied().unwrap_or(1.96);
        Estimate {
            value: fit.slope,
            ci_low: fit.slope - q * se,
            ci_high: fit.slope + q * se,
            level: 0.95,
            resamples: 0,
        }
    };
    let resid: Vec<f64> = ly
        .iter()
        .zip(&eps)
        .map(|(y, e)| y - (e * (2.0 + 1.0 / e).ln()).ln())
        .collect();
    let c = mean(&resid);
    let log_corrected_rss: f64 = resid.iter().map(|r| (r - c).powi(2)).sum();
    Ok(RateFit {
        rate,
        fit,
        power_rss: fit.rss,
        log_corrected_rss,
        log_corrected_preferred: log_corrected_rss < fit.rss,
        realizations: reals.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoScaleReport {
    pub rows: Vec<DefectRow>,
    pub fit: RateFit,
    /// `(ε, median defect)` in the configured order.
    pub median_defects: Vec<(f64, f64)>,
    pub median_monotone: bool,
    pub a_hom: Vec<Vec<Vec<f64>>>,
    pub seconds: f64,
}

fn one_task(
    cfg: &TwoScaleConfig,
    realization: usize,
    eps: f64,
) -> Result<(DefectRow, Vec<Vec<f64>>)> {
    let seed = split_seed(cfg.master_seed, realization as u64);
    let set = sample(&cfg.geometry, seed)?;
    let tile = Arc::new(rasterize(&set, cfg.cells_per_eps, &cfg.profile)?);
    let bundle = compute_bundle(
        tile.clone(),
        cfg.corrector_t(),
        &cfg.solver,
        BundleParts::FLUX_ONLY,
        seed,
    )?;
    let est = homogenized_estimate(&bundle);
    let big = tile_field(&tile, tiles_per_side(eps)?, 1.0)?;
    let (u, _) = solve_eps_problem(&big, &cfg.forcing, cfg.eps_problem_t, &cfg.solver)?;
    let uh = homogenized_solution(
        &big.grid,
        &est.a_hom,
        est.volume_fraction_matrix,
        &cfg.forcing,
    );
    let defect = two_scale_defect(&u, &uh, &bundle, &big, eps)?;
    Ok((
        DefectRow {
            realization,
            epsilon: eps,
            defect,
            grad_g_norm: grad_g_norm(&big.grid, &cfg.forcing),
        },
        est.a_hom,
    ))
}

/// Every `(realization, ε)` pair on `workers` threads, then the rate fit.
pub fn run_twoscale(cfg: &TwoScaleConfig, workers: usize) -> Result<TwoScaleReport> {
    cfg.validate()?;
    let start = Instant::now();
    let ne = cfg.epsilon_list.len();
    let results = run_indexed(cfg.realizations * ne, workers, |t| {
        one_task(cfg, t / ne, cfg.epsilon_list[t % ne])
    })?;
    let mut rows = Vec::new();
    let mut a_hom = Vec::new();
    for (t, r) in results.into_iter().enumerate() {
        let (row, a) = r?;
        if t % ne == 0 {
            a_hom.push(a);
        }
        rows.push(row);
    }
    let median_defects: Vec<(f64, f64)> = cfg
        .epsilon_list
        .iter()
        .map(|&e| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.epsilon == e)
                .map(|r| r.defect)
                .collect();
            (e, median(&v))
        })
        .collect();
    let median_monotone = median_defects.windows(2).all(|w| w[1].1 < w[0].1);
    let fit = rate_fit(
        &rows,
        cfg.bootstrap_resamples,
        split_seed(cfg.master_seed, u64::MAX),
    )?;
    Ok(TwoScaleReport {
        rows,
        fit,
        median_defects,
        median_monotone,
        a_hom,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::{solve_spectral, SpectralOperator};
    use crate::geometry::{LatticeParams, RadiusLaw};

    fn lattice(l: f64, hi: f64) -> GeometryParams {
        GeometryParams::LatticeIid(LatticeParams {
            box_side: l,
            dimension: 2,
            radius_law: if hi > 0.0 {
                RadiusLaw::Uniform { lo: 0.0, hi }
            } else {
                RadiusLaw::PointMass { value: 0.0 }
            },
            diameter_cap: 0.5,
            separation: None,
        })
    }

    fn config(hi: f64) -> TwoScaleConfig {
        TwoScaleConfig {
            geometry: lattice(2.0, hi),
            profile: Profile::default(),
            epsilon_list: vec![0.25, 0.125, 0.0625],
            cells_per_eps: 16,
            forcing: Forcing::default(),
            realizations: 1,
            master_seed: 5,
            corrector_t: None,
            eps_problem_t: 1e6,
            solver: SolverConfig::spectral().with_tolerance(1e-12),
            bootstrap_resamples: 200,
        }
    }

    #[test]
    fn divergence_matches_finite_differences() {
        let f = Forcing::default();
        let x = [0.3, 0.71];
        let e = 1e-6;
        let num: f64 = (0..2)
            .map(|k| {
                let mut p = x;
                let mut m = x;
                p[k] += e;
                m[k] -= e;
                (f.g(&p, k) - f.g(&m, k)) / (2.0 * e)
            })
            .sum();
        assert!((num - f.divergence(&x)).abs() < 1e-6);
    }

    #[test]
    fn zero_forcing_gives_zero_solution_and_defect() {
        let mut cfg = config(0.2);
        cfg.forcing = Forcing::Zero;
        let (row, _) = one_task(&cfg, 0, 0.25).unwrap();
        assert_eq!(row.defect, 0.0);
    }

    #[test]
    fn homogeneous_medium_matches_the_spectral_solve() {
        let g = Grid::new(2, 64, 1.0).unwrap();
        let field = CoefficientField::uniform(g, 1.0);
        let forcing = Forcing::default();
        let cfg = SolverConfig::spectral().with_tolerance(1e-13);
        let (u, _) = solve_eps_problem(&field, &forcing, 1e6, &cfg).unwrap();
        let vol = g.cell_volume();
        let f: Vec<f64> = matrix_rhs(&field, &forcing)
            .iter()
            .map(|v| v / vol)
            .collect();
        let rhs = GridField::scalar(g, Support::Everywhere, f);
        let v = solve_spectral(&rhs, SpectralOperator::Massive { t: 1e6 });
        let vm = mean(v.values());
        let scale = v.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in u.values().iter().zip(v.values()) {
            assert!((a - (b - vm)).abs() <= 1e-8 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn single_tile_reproduces_the_tile_field() {
        let set = sample(&lattice(2.0, 0.2), 3).unwrap();
        let tile = rasterize(&set, 16, &Profile::default()).unwrap();
        let big = tile_field(&tile, 1, 2.0).unwrap();
        assert_eq!(big.matrix_mask, tile.matrix_mask);
        assert_eq!(big.edge_conductance, tile.edge_conductance);
        let tiled = tile_field(&tile, 4, 1.0).unwrap();
        assert_eq!(tiled.grid.n(), 64);
        assert!((tiled.matrix_volume_fraction() - tile.matrix_volume_fraction()).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_defect_is_mollification_error_and_decays() {
        let cfg = config(0.0);
        let d: Vec<f64> = cfg
            .epsilon_list
            .iter()
            .map(|&e| one_task(&cfg, 0, e).unwrap().0.defect)
            .collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
        let grid = Grid::new(2, 16 * 16, 1.0).unwrap();
        assert!(d[2] < 0.05 * grad_g_norm(&grid, &cfg.forcing));
    }

    #[test]
    fn defect_ignores_global_constants() {
        let cfg = config(0.2);
        let seed = split_seed(cfg.master_seed, 0);
        let set = sample(&cfg.geometry, seed).unwrap();
        let tile = Arc::new(rasterize(&set, 16, &cfg.profile).unwrap());
        let b =
            compute_bundle(tile.clone(), 4.0, &cfg.solver, BundleParts::FLUX_ONLY, seed).unwrap();
        let est = homogenized_estimate(&b);
        let big = tile_field(&tile, 4, 1.0).unwrap();
        let (u, _) = solve_eps_problem(&big, &cfg.forcing, 1e6, &cfg.solver).unwrap();
        let uh = homogenized_solution(
            &big.grid,
            &est.a_hom,
            est.volume_fraction_matrix,
            &cfg.forcing,
        );
        let d0 = two_scale_defect(&u, &uh, &b, &big, 0.25).unwrap();
        let shifted: Vec<f64> = u
            .values()
            .iter()
            .zip(&big.matrix_mask)
            .map(|(v, &m)| if m { v + 3.0 } else { 0.0 })
            .collect();
        let u2 = GridField::scalar(big.grid, Support::MatrixOnly, shifted);
        let uh2: Vec<f64> = uh.iter().map(|v| v - 1.5).collect();
        let d1 = two_scale_defect(&u2, &uh2, &b, &big, 0.25).unwrap();
        assert!((d0 - d1).abs() <= 1e-9 * d0.max(1e-12));
        assert!(matches!(
            two_scale_defect(&u, &uh, &b, &big, 0.125),
            Err(Error::ScaleMismatch(_))
        ));
    }

    #[test]
    fn resolution_doubling_does_not_inflate_the_defect() {
        let mut cfg = config(0.25);
        let coarse = one_task(&cfg, 0, 0.125).unwrap().0.defect;
        cfg.cells_per_eps = 32;
        let fine = one_task(&cfg, 0, 0.125).unwrap().0.defect;
        assert!(fine <= 1.1 * coarse, "{coarse} -> {fine}");
    }

    #[test]
    fn exact_power_law_rate() {
        let rows: Vec<DefectRow> = [0.125, 0.0625, 0.03125, 0.015625]
            .iter()
            .map(|&e| DefectRow {
                realization: 0,
                epsilon: e,
                defect: e,
                grad_g_norm: 1.0,
            })
            .collect();
        let f = rate_fit(&rows, 200, 0).unwrap();
        assert!((f.rate.value - 1.0).abs() < 0.02);
        assert!(!f.log_corrected_preferred);
    }

    #[test]
    fn log_corrected_model_is_selected() {
        let rows: Vec<DefectRow> = (0..3)
            .flat_map(|k| {
                [0.125, 0.0625, 0.03125, 0.015625]
                    .into_iter()
                    .map(move |e: f64| DefectRow {
                        realization: k,
                        epsilon: e,
                        defect: (1.0 + 0.1 * k as f64) * e * (2.0 + 1.0 / e).ln(),
                        grad_g_norm: 1.0,
                    })
            })
            .collect();
        let f = rate_fit(&rows, 200, 0).unwrap();
        assert!(f.log_corrected_preferred);
        assert_eq!(f.realizations, 3);
    }
}
