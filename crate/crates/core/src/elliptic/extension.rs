use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::cg::pcg;
use super::dense::{cholesky_factor, cholesky_solve};
use crate::error::{Error, Result};
use crate::field::{hole_components, CoefficientField, Grid, GridField, Support};

/// Components up to this size are factorized densely.
const DENSE_LIMIT: usize = 512;

enum Solver {
    Dense(Vec<f64>),
    Iterative,
}

struct HoleComponent {
    cells: Vec<u32>,
    /// `2d` slots per cell: local index of a hole neighbour, or `u32::MAX` for matrix.
    inner: Vec<u32>,
    /// Matrix neighbours per cell, CSR style.
    outer_start: Vec<u32>,
    outer: Vec<u32>,
    solver: Solver,
}

impl HoleComponent {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let w = self.inner.len() / self.cells.len();
        for i in 0..self.cells.len() {
            let mut s = w as f64 * x[i];
            for &j in &self.inner[i * w..(i + 1) * w] {
                if j != u32::MAX {
                    s -= x[j as usize];
                }
            }
            y[i] = s;
        }
    }
}

/// Discrete harmonic extension from the matrix into every hole component.
///
/// Linear in its input; factorizations are computed once per field.
pub struct Extension {
    grid: Grid,
    matrix_mask: Vec<bool>,
    components: Vec<HoleComponent>,
}

impl Extension {
    pub fn new(field: &CoefficientField) -> Result<Self> {
        let grid = field.grid;
        let d = grid.dimension;
        let labels = hole_components(field);
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); labels.count];
        for (c, &l) in labels.labels.iter().enumerate() {
            if l != crate::field::UNLABELLED {
                members[l as usize].push(c as u32);
            }
        }
        let mut local = vec![u32::MAX; grid.len()];
        let mut components = Vec::with_capacity(members.len());
        for (label, cells) in members.into_iter().enumerate() {
            for (i, &c) in cells.iter().enumerate() {
                local[c as usize] = i as u32;
            }
            let m = cells.len();
            let mut inner = vec![u32::MAX; m * 2 * d];
            let mut outer_start = Vec::with_capacity(m + 1);
            let mut outer = Vec::new();
            for (i, &c) in cells.iter().enumerate() {
                outer_start.push(outer.len() as u32);
                let c = c as usize;
                for k in 0..d {
                    for (s, nb) in [grid.forward(c, k), grid.backward(c, k)]
                        .into_iter()
                        .enumerate()
                    {
                        if field.matrix_mask[nb] {
                            outer.push(nb as u32);
                        } else {
                            inner[i * 2 * d + 2 * k + s] = local[nb];
                        }
                    }
                }
            }
            outer_start.push(outer.len() as u32);
            if outer.is_empty() {
                return Err(Error::IsolatedHole(label));
            }
            let mut comp = HoleComponent {
                cells,
                inner,
                outer_start,
                outer,
                solver: Solver::Iterative,
            };
            if m <= DENSE_LIMIT {
                let mut a = vec![0.0; m * m];
                for i in 0..m {
                    a[i * m + i] = (2 * d) as f64;
                    for &j in &comp.inner[i * 2 * d..(i + 1) * 2 * d] {
                        if j != u32::MAX {
                            a[i * m + j as usize] -= 1.0;
                        }
                    }
                }
                cholesky_factor(&mut a, m).ok_or(Error::IsolatedHole(label))?;
                comp.solver = Solver::Dense(a);
            }
            components.push(comp);
        }
        Ok(Self {
            grid,
            matrix_mask: field.matrix_mask.clone(),
            components,
        })
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    /// Extend a full-grid array whose hole entries are ignored.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = u
            .iter()
            .zip(&self.matrix_mask)
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        for comp in &self.components {
            let m = comp.cells.len();
            let mut b: Vec<f64> = (0..m)
                .map(|i| {
                    let (s, e) = (
                        comp.outer_start[i] as usize,
                        comp.outer_start[i + 1] as usize,
                    );
                    comp.outer[s..e].iter().map(|&c| u[c as usize]).sum()
                })
                .collect();
            match &comp.solver {
                Solver::Dense(l) => cholesky_solve(l, m, &mut b),
                Solver::Iterative => {
                    let w = (2 * self.grid.dimension) as f64;
                    let mut x = vec![0.0; m];
                    pcg(
                        |x, y| comp.apply(x, y),
                        |r, z| z.iter_mut().zip(r).for_each(|(z, r)| *z = r / w),
                        &b,
                        &mut x,
                        1e-15,
                        20 * m + 100,
                    );
                    b = x;
                }
            }
            for (&c, v) in comp.cells.iter().zip(b) {
                out[c as usize] = v;
            }
        }
        out
    }

    pub fn apply_field(&self, u: &GridField) -> GridField {
        let mut out = u.clone();
        out.support = Support::Everywhere;
        for comp in &mut out.components {
            *comp = self.apply(comp);
        }
        out
    }
}

/// Harmonic extension of a matrix-only scalar field.
pub fn harmonic_extension(u: &GridField, field: &CoefficientField) -> Result<GridField> {
    Ok(Extension::new(field)?.apply_field(u))
}

/// Empirical operator-norm ratios of the extension over random inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExtensionBounds {
    /// `max ‖u^ext‖₂ / ‖u‖₂` (the latter over matrix cells).
    pub l2: f64,
    /// `max ‖∇u^ext‖₂ / ‖∇u‖₂` (the latter over matrix-matrix edges).
    pub gradient: f64,
}

pub fn extension_norm_bounds(
    field: &CoefficientField,
    samples: usize,
    seed: u64,
) -> Result<ExtensionBounds> {
    let ext = Extension::new(field)?;
    let grid = field.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bounds = ExtensionBounds {
        l2: 0.0,
        gradient: 0.0,
    };
    // smooth-ish inputs: random low modes plus noise, so gradients are not dominated by the grid scale
    for _ in 0..samples {
        let phase: Vec<f64> = (0..grid.dimension)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        let amp = rng.gen_range(0.5..1.5);
        let u: Vec<f64> = (0..grid.len())
            .map(|c| {
                if !field.matrix_mask[c] {
                    return 0.0;
                }
                let x = grid.cell_center(c);
                let smooth: f64 = (0..grid.dimension)
                    .map(|k| (std::f64::consts::TAU * x[k] / grid.box_side + phase[k]).sin())
                    .sum();
                amp * smooth + 0.1 * rng.gen_range(-1.0..1.0)
            })
            .collect();
        let v = ext.apply(&u);
        let l2_in: f64 = u.iter().map(|x| x * x).sum();
        let l2_out: f64 = v.iter().map(|x| x * x).sum();
        let mut g_in = 0.0;
        let mut g_out = 0.0;
        for k in 0..grid.dimension {
            for c in 0..grid.len() {
                let f = grid.forward(c, k);
                let dv = v[f] - v[c];
                g_out += dv * dv;
                if field.matrix_mask[c] && field.matrix_mask[f] {
                    let du = u[f] - u[c];
                    g_in += du * du;
                }
            }
        }
        if l2_in > 0.0 {
            bounds.l2 = bounds.l2.max((l2_out / l2_in).sqrt());
        }
        if g_in > 0.0 {
            bounds.gradient = bounds.gradient.max((g_out / g_in).sqrt());
        }
    }
    Ok(bounds)
}
