//! Quantitative diagnostics on corrector bundles.
//!
//! Balls are discrete center-in-ball cell sets on the torus and `fint` is the
//! cell-count-weighted average. Edge quantities are attached to the cell they start
//! from, so `fint_B χ_M |v|²` sums `v_k²` over the active forward edges of cells in `B`.

mod energy;
mod excess;
mod harmonic;
mod probes;
mod regularity;

use serde::{Deserialize, Serialize};

pub use energy::{
    caccioppoli_check, exponential_weight, hole_filling_ratio, weighted_energy, weighted_mean,
    HoleFilling, WeightedMean,
};
pub use excess::{corrected_affine_gradient, excess, Excess};
pub use harmonic::{
    a_harmonic_sample, excess_decay_profile, mean_value_check, AHarmonic, DecayProfile,
};
pub use probes::{averaging_bump, locality_probe, oscillation_probe, LocalityProbe, ProbeSetup};
pub use regularity::{
    corrector_growth_profile, fit_growth_regime, oscillation_profile, regularity_radius,
    rstar_from_profile, GrowthFit, GrowthRegime, RegularityRadius,
};

use crate::error::{Error, Result};
use crate::field::Grid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantifyConfig {
    #[serde(rename = "rstar_threshold_C")]
    pub rstar_threshold_c: f64,
    /// Explicit radii; `None` means dyadic multiples of `h` in `[1, L/2]`.
    pub radii: Option<Vec<f64>>,
    pub holder_alpha: f64,
    pub kappa: f64,
    #[serde(rename = "oscillation_radius_M")]
    pub oscillation_radius_m: f64,
}

impl Default for QuantifyConfig {
    fn default() -> Self {
        Self {
            rstar_threshold_c: 100.0,
            radii: None,
            holder_alpha: 0.5,
            kappa: 1.0,
            oscillation_radius_m: 1.0,
        }
    }
}

impl QuantifyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rstar_threshold_c > 0.0) {
            return Err(Error::param("rstar_threshold_C must be positive"));
        }
        if !(self.holder_alpha > 0.0 && self.holder_alpha < 1.0) {
            return Err(Error::param("holder_alpha must lie in (0, 1)"));
        }
        if !(self.kappa > 0.0 && self.oscillation_radius_m > 0.0) {
            return Err(Error::param(
                "kappa and oscillation_radius_M must be positive",
            ));
        }
        if let Some(r) = &self.radii {
            if r.is_empty() || r.windows(2).any(|w| w[0] >= w[1]) || r[0] <= 0.0 {
                return Err(Error::param(
                    "radii must be positive and strictly increasing",
                ));
            }
        }
        Ok(())
    }

    pub fn radii_for(&self, grid: &Grid) -> Vec<f64> {
        self.radii
            .clone()
            .unwrap_or_else(|| dyadic_radii(grid, 1.0, 0.5 * grid.box_side))
    }
}

/// `2^k h` for all `k` with the result in `[lo, hi]`.
pub fn dyadic_radii(grid: &Grid, lo: f64, hi: f64) -> Vec<f64> {
    let h = grid.spacing();
    let mut r = h;
    let mut out = Vec::new();
    while r <= hi * (1.0 + 1e-12) {
        if r >= lo * (1.0 - 1e-12) {
            out.push(r);
        }
        r *= 2.0;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub radius: f64,
    pub value: f64,
    pub auxiliary: Option<f64>,
}

impl ProfileRow {
    pub fn new(radius: f64, value: f64) -> Self {
        Self {
            radius,
            value,
            auxiliary: None,
        }
    }
}

/// Cells whose centers lie within `r` of `center` (periodic), with their
/// minimum-image displacements.
#[derive(Clone, Debug)]
pub struct Ball {
    pub radius: f64,
    pub cells: Vec<usize>,
    pub offsets: Vec<[f64; 3]>,
}

impl Ball {
    pub fn new(grid: &Grid, center: &[f64], radius: f64) -> Self {
        let d = grid.dimension;
        let h = grid.spacing();
        let n = grid.n() as i64;
        let lo: Vec<i64> = (0..d)
            .map(|a| ((center[a] - radius) / h - 0.5).floor() as i64)
            .collect();
        let span: Vec<i64> = (0..d)
            .map(|a| (((center[a] + radius) / h - 0.5).ceil() as i64 - lo[a] + 1).min(n))
            .collect();
        let total: i64 = span.iter().product();
        let mut cells = Vec::new();
        let mut offsets = Vec::new();
        let mut coords = [0i64; 3];
        let r2 = radius * radius * (1.0 + 1e-12);
        for t in 0..total {
            let mut rem = t;
            let mut off = [0.0; 3];
            let mut dist2 = 0.0;
            for a in 0..d {
                coords[a] = lo[a] + rem % span[a];
                rem /= span[a];
                let x = (coords[a] as f64 + 0.5) * h;
                off[a] = crate::geometry::wrap_delta(x - center[a], grid.box_side);
                dist2 += off[a] * off[a];
            }
            if dist2 <= r2 {
                cells.push(grid.index_wrapped(&coords[..d]));
                offsets.push(off);
            }
        }
        Self {
            radius,
            cells,
            offsets,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn distance(&self, i: usize) -> f64 {
        self.offsets[i].iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Quartic cutoff: 1 on `B_{R/2}`, `(1 − t²)²` with `t = (|x| − R/2)/(R/2)` up to `R`, 0 beyond.
pub fn cutoff(dist: f64, r: f64) -> f64 {
    let half = 0.5 * r;
    if dist <= half {
        1.0
    } else if dist >= r {
        0.0
    } else {
        let t = (dist - half) / half;
        (1.0 - t * t).powi(2)
    }
}

/// `(e_ξ + ∇φ)_k` on the forward edges of every cell for a corrector direction.
pub(crate) fn corrected_gradient(grid: &Grid, phi: &[f64], xi: &[f64]) -> Vec<Vec<f64>> {
    let h = grid.spacing();
    (0..grid.dimension)
        .map(|k| {
            (0..grid.len())
                .map(|c| xi[k] + (phi[grid.forward(c, k)] - phi[c]) / h)
                .collect()
        })
        .collect()
}
