use std::sync::Arc;

use serde::Serialize;

use super::{weighted_energy, ProfileRow};
use crate::corrector::{compute_bundle, BundleParts, CorrectorBundle, CorrectorSolver};
use crate::elliptic::SolverConfig;
use crate::error::{Error, Result};
use crate::field::{rasterize, Grid, Profile};
use crate::geometry::{
    resample_inside, resample_outside, wrap_delta, GeometryParams, InclusionSet,
};
use crate::stats::ols;

/// Everything needed to rebuild a bundle after the geometry changes.
#[derive(Clone, Debug)]
pub struct ProbeSetup {
    pub params: GeometryParams,
    pub cells_per_side: usize,
    pub profile: Profile,
    pub t: f64,
    pub solver: SolverConfig,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalityProbe {
    /// `(R, |F_T(a₁) − F_T(a₂)|)`.
    pub rows: Vec<ProfileRow>,
    /// `−d log(gap)/d(R/√T)` fitted over the positive gaps.
    pub rate: Option<f64>,
}

fn same_geometry(a: &InclusionSet, b: &InclusionSet) -> bool {
    a.inclusions == b.inclusions
}

/// Resample outside `B_R(center)` for each `R` and compare `F_T` around `center`.
pub fn locality_probe(
    setup: &ProbeSetup,
    set: &InclusionSet,
    bundle: &CorrectorBundle,
    radii: &[f64],
    center: &[f64],
    seed: u64,
) -> Result<LocalityProbe> {
    let base = weighted_energy(bundle, setup.kappa, center)?;
    let parts = BundleParts {
        extension: false,
        sigma: false,
        aux: true,
    };
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let other = resample_outside(set, &setup.params, center, r, seed)?;
        let gap = if same_geometry(set, &other) {
            0.0
        } else {
            let field = Arc::new(rasterize(&other, setup.cells_per_side, &setup.profile)?);
            let b2 = compute_bundle(field, setup.t, &setup.solver, parts, seed)?;
            (weighted_energy(&b2, setup.kappa, center)? - base).abs()
        };
        rows.push(ProfileRow::new(r, gap));
    }
    let sqrt_t = setup.t.sqrt();
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.value > 0.0)
        .map(|r| (r.radius / sqrt_t, r.value.ln()))
        .unzip();
    let rate = if x.len() >= 2 {
        ols(&x, &y).ok().map(|f| -f.slope)
    } else {
        None
    };
    Ok(LocalityProbe { rows, rate })
}

/// `g = c (1 − |y|²/r²)² e₁` on `B_r(origin)` with `‖g‖₂ = r^{−d/2}` on the grid.
pub fn averaging_bump(grid: &Grid, origin: &[f64], r: f64) -> Vec<f64> {
    let d = grid.dimension;
    let mut g: Vec<f64> = (0..grid.len())
        .map(|c| {
            let x = grid.cell_center(c);
            let s2: f64 = (0..d)
                .map(|a| wrap_delta(x[a] - origin[a], grid.box_side).powi(2))
                .sum::<f64>()
                / (r * r);
            if s2 < 1.0 {
                (1.0 - s2).powi(2)
            } else {
                0.0
            }
        })
        .collect();
    let norm2 = g.iter().map(|v| v * v).sum::<f64>() * grid.cell_volume();
    if norm2 > 0.0 {
        let scale = (r.powi(-(d as i32)) / norm2).sqrt();
        g.iter_mut().for_each(|v| *v *= scale);
    }
    g
}

/// `|∫ g·(∇φ^ext_new − ∇φ^ext_old)|` for the `e₁` corrector after resampling the
/// inclusions wholly inside `B_M(x)`; `g` is the bump of [`averaging_bump`] at `origin`.
#[allow(clippy::too_many_arguments)]
pub fn oscillation_probe(
    setup: &ProbeSetup,
    set: &InclusionSet,
    bundle: &CorrectorBundle,
    x: &[f64],
    m: f64,
    r: f64,
    origin: &[f64],
    seed: u64,
) -> Result<f64> {
    if bundle
        .directions
        .first()
        .and_then(|dc| dc.phi_ext.as_ref())
        .is_none()
    {
        return Err(Error::param("oscillation probe needs φ^ext in the bundle"));
    }
    let other = resample_inside(set, &setup.params, x, m, seed)?;
    if same_geometry(set, &other) {
        return Ok(0.0);
    }
    let grid = *bundle.grid();
    let field = Arc::new(rasterize(&other, setup.cells_per_side, &setup.profile)?);
    let solver = CorrectorSolver::new(field, setup.t, &setup.solver, true)?;
    let mut e1 = vec![0.0; grid.dimension];
    e1[0] = 1.0;
    let fresh = solver.solve(&e1)?;
    let new = fresh
        .phi_ext
        .as_ref()
        .map(|f| f.values())
        .unwrap_or(fresh.phi.values());
    let old = bundle.phi_ext(0);
    let g = averaging_bump(&grid, origin, r);
    let h = grid.spacing();
    let mut s = 0.0;
    for c in 0..grid.len() {
        if g[c] == 0.0 {
            continue;
        }
        let f = grid.forward(c, 0);
        s += g[c] * ((new[f] - new[c]) - (old[f] - old[c])) / h;
    }
    Ok((s * grid.cell_volume()).abs())
}
