//! Massive correctors, fluxes, flux corrector, the auxiliary field `g_T` and the
//! homogenized coefficient.
//!
//! Expectations are replaced by spatial averages over the torus (ergodic proxy).

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::elliptic::{Extension, MassiveOperator, SolveStats, SolverConfig};
use crate::error::Result;
use crate::fft::{laplacian_symbol, staggered_derivative_symbol, FftNd};
use crate::field::{CoefficientField, FieldKind, Grid, GridField, Location, Support};

/// Per-cell right-hand side `h^(d-1) Σ_k ξ_k (a_{c+e_k/2} − a_{c−e_k/2})`.
pub fn corrector_rhs(field: &CoefficientField, xi: &[f64]) -> Vec<f64> {
    let grid = field.grid;
    let scale = grid.spacing().powi(grid.dimension as i32 - 1);
    (0..grid.len())
        .map(|c| {
            if !field.matrix_mask[c] {
                return 0.0;
            }
            (0..grid.dimension)
                .map(|k| {
                    xi[k]
                        * (field.edge_conductance[k][c]
                            - field.edge_conductance[k][grid.backward(c, k)])
                })
                .sum::<f64>()
                * scale
        })
        .collect()
}

/// Edge flux `a_e ((u_{c+e_k} − u_c)/h + ξ_k)`, zero on degenerate edges.
pub fn flux_of(field: &CoefficientField, u: &[f64], xi: &[f64]) -> GridField {
    let grid = field.grid;
    let h = grid.spacing();
    let comps = (0..grid.dimension)
        .map(|k| {
            (0..grid.len())
                .map(|c| {
                    let a = field.edge_conductance[k][c];
                    if a > 0.0 {
                        a * ((u[grid.forward(c, k)] - u[c]) / h + xi[k])
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    GridField::vector(grid, Location::Edge, Support::Everywhere, comps)
}

/// Forward differences `(u_{c+e_k} − u_c)/h` on every edge.
pub fn edge_gradient(grid: &Grid, u: &[f64]) -> Vec<Vec<f64>> {
    let h = grid.spacing();
    (0..grid.dimension)
        .map(|k| {
            (0..grid.len())
                .map(|c| (u[grid.forward(c, k)] - u[c]) / h)
                .collect()
        })
        .collect()
}

/// Per-axis pair average of an edge field onto cell centers.
pub fn edges_to_cells(grid: &Grid, edge: &[Vec<f64>]) -> Vec<Vec<f64>> {
    edge.iter()
        .enumerate()
        .map(|(k, e)| {
            (0..grid.len())
                .map(|c| 0.5 * (e[c] + e[grid.backward(c, k)]))
                .collect()
        })
        .collect()
}

/// One direction of the corrector problem.
#[derive(Clone, Debug)]
pub struct DirectionalCorrector {
    pub xi: Vec<f64>,
    pub phi: GridField,
    pub phi_ext: Option<GridField>,
    pub flux: GridField,
    pub stats: SolveStats,
}

/// Reusable factorization state for one field and one `T`.
pub struct CorrectorSolver {
    field: Arc<CoefficientField>,
    t: f64,
    cfg: SolverConfig,
    op: MassiveOperator,
    extension: Option<Extension>,
}

impl CorrectorSolver {
    pub fn new(
        field: Arc<CoefficientField>,
        t: f64,
        cfg: &SolverConfig,
        with_extension: bool,
    ) -> Result<Self> {
        let op = MassiveOperator::new(&field, t, cfg.preconditioner)?;
        let extension = if with_extension {
            Some(Extension::new(&field)?)
        } else {
            None
        };
        Ok(Self {
            field,
            t,
            cfg: cfg.clone(),
            op,
            extension,
        })
    }

    pub fn field(&self) -> &Arc<CoefficientField> {
        &self.field
    }

    pub fn operator(&self) -> &MassiveOperator {
        &self.op
    }

    pub fn extension(&self) -> Option<&Extension> {
        self.extension.as_ref()
    }

    pub fn solve(&self, xi: &[f64]) -> Result<DirectionalCorrector> {
        let rhs = corrector_rhs(&self.field, xi);
        let (phi, stats) = self.op.solve(&rhs, &self.cfg, "massive_corrector")?;
        let phi_ext = self
            .extension
            .as_ref()
            .map(|e| GridField::scalar(self.field.grid, Support::Everywhere, e.apply(&phi)));
        let flux = flux_of(&self.field, &phi, xi);
        Ok(DirectionalCorrector {
            xi: xi.to_vec(),
            phi: GridField::scalar(self.field.grid, Support::MatrixOnly, phi),
            phi_ext,
            flux,
            stats,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }
}

/// The corrector in direction `ξ` with its extension.
pub fn massive_corrector(
    field: &CoefficientField,
    t: f64,
    xi: &[f64],
    cfg: &SolverConfig,
) -> Result<DirectionalCorrector> {
    CorrectorSolver::new(Arc::new(field.clone()), t, cfg, true)?.solve(xi)
}

/// Flux of an already computed corrector.
pub fn flux(field: &CoefficientField, corrector: &DirectionalCorrector) -> GridField {
    flux_of(field, corrector.phi.values(), &corrector.xi)
}

/// Components `(j, k)` with `j < k` in storage order.
pub fn sigma_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..d {
        for k in j + 1..d {
            out.push((j, k));
        }
    }
    out
}

/// Spectral toolkit shared by the σ and `g_T` solves.
pub struct CellSpectral {
    grid: Grid,
    fft: FftNd,
    laplacian: Vec<f64>,
    derivative: Vec<Vec<Complex64>>,
}

impl CellSpectral {
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            fft: FftNd::new(grid),
            laplacian: laplacian_symbol(&grid),
            derivative: (0..grid.dimension)
                .map(|k| staggered_derivative_symbol(&grid, k))
                .collect(),
        }
    }

    /// Spectral staggered derivative of a cell field along `axis`.
    pub fn derivative(&self, u: &[f64], axis: usize) -> Vec<f64> {
        let mut z = self.fft.forward_real(u);
        for (c, s) in z.iter_mut().zip(&self.derivative[axis]) {
            *c *= *s;
        }
        self.fft.inverse_real(z)
    }

    /// `σ_jk` for the cell-centered flux `q`, zero mean.
    pub fn sigma(&self, q: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let hats: Vec<Vec<Complex64>> = q.iter().map(|c| self.fft.forward_real(c)).collect();
        sigma_pairs(self.grid.dimension)
            .into_iter()
            .map(|(j, k)| {
                let z: Vec<Complex64> = (0..self.grid.len())
                    .map(|m| {
                        let lam = self.laplacian[m];
                        if lam == 0.0 {
                            return Complex64::default();
                        }
                        (self.derivative[j][m] * hats[k][m] - self.derivative[k][m] * hats[j][m])
                            / lam
                    })
                    .collect();
                self.fft.inverse_real(z)
            })
            .collect()
    }

    /// `(1/T) g − Δg = (1/√T)(q − mean q)` component by component.
    pub fn aux(&self, q: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
        let s = 1.0 / t.sqrt();
        q.iter()
            .map(|c| {
                let mut z = self.fft.forward_real(c);
                for (m, v) in z.iter_mut().enumerate() {
                    *v = if m == 0 {
                        Complex64::default()
                    } else {
                        *v * s / (1.0 / t + self.laplacian[m])
                    };
                }
                self.fft.inverse_real(z)
            })
            .collect()
    }
}

fn tensor_field(grid: Grid, i: usize, comps: Vec<Vec<f64>>) -> GridField {
    let labels = sigma_pairs(grid.dimension)
        .into_iter()
        .map(|(j, k)| (i, j, k))
        .collect();
    GridField {
        grid,
        kind: FieldKind::Tensor(labels),
        location: Location::Cell,
        support: Support::Everywhere,
        components: comps,
    }
}

/// σ_i from the edge flux q_i (cell-interpolated first).
pub fn flux_corrector(q: &GridField, i: usize) -> GridField {
    let grid = q.grid;
    let cells = edges_to_cells(&grid, &q.components);
    tensor_field(grid, i, CellSpectral::new(grid).sigma(&cells))
}

/// `g_T` for the edge flux `q_i`.
pub fn massive_aux_field(q: &GridField, t: f64) -> GridField {
    let grid = q.grid;
    let cells = edges_to_cells(&grid, &q.components);
    GridField::vector(
        grid,
        Location::Cell,
        Support::Everywhere,
        CellSpectral::new(grid).aux(&cells, t),
    )
}

/// Which parts of the bundle to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleParts {
    pub extension: bool,
    pub sigma: bool,
    pub aux: bool,
}

impl BundleParts {
    pub const ALL: Self = Self {
        extension: true,
        sigma: true,
        aux: true,
    };
    pub const FLUX_ONLY: Self = Self {
        extension: false,
        sigma: false,
        aux: false,
    };
}

#[derive(Clone, Debug)]
pub struct CorrectorBundle {
    pub field: Arc<CoefficientField>,
    pub t: f64,
    pub seed: u64,
    pub directions: Vec<DirectionalCorrector>,
    /// `sigma[i]` holds `σ_ijk` for `j < k`; empty when not requested.
    pub sigma: Vec<GridField>,
    /// `g[i]` is the vector field `g_T` for direction `i`; empty when not requested.
    pub g: Vec<GridField>,
}

impl CorrectorBundle {
    pub fn grid(&self) -> &Grid {
        &self.field.grid
    }

    pub fn dimension(&self) -> usize {
        self.field.grid.dimension
    }

    pub fn stats(&self) -> Vec<&SolveStats> {
        self.directions.iter().map(|d| &d.stats).collect()
    }

    /// `σ_ijk` for any `j, k`, using antisymmetry; `None` on the diagonal.
    pub fn sigma_component(&self, i: usize, j: usize, k: usize) -> Option<(f64, &[f64])> {
        if j == k {
            return None;
        }
        let (a, b, sign) = if j < k { (j, k, 1.0) } else { (k, j, -1.0) };
        let idx = sigma_pairs(self.dimension())
            .iter()
            .position(|p| *p == (a, b))?;
        Some((sign, &self.sigma[i].components[idx]))
    }

    /// φ^ext for direction `i`, or `φ` itself when no extension was computed.
    pub fn phi_ext(&self, i: usize) -> &[f64] {
        let d = &self.directions[i];
        d.phi_ext.as_ref().unwrap_or(&d.phi).values()
    }
}

/// Solve all `d` coordinate directions (in parallel) and assemble the requested parts.
pub fn compute_bundle(
    field: Arc<CoefficientField>,
    t: f64,
    cfg: &SolverConfig,
    parts: BundleParts,
    seed: u64,
) -> Result<CorrectorBundle> {
    let solver = CorrectorSolver::new(field.clone(), t, cfg, parts.extension)?;
    bundle_from_solver(&solver, parts, seed)
}

pub fn bundle_from_solver(
    solver: &CorrectorSolver,
    parts: BundleParts,
    seed: u64,
) -> Result<CorrectorBundle> {
    let field = solver.field().clone();
    let d = field.grid.dimension;
    let directions = (0..d)
        .into_par_iter()
        .map(|i| {
            let mut xi = vec![0.0; d];
            xi[i] = 1.0;
            solver.solve(&xi)
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = field.grid;
    let (sigma, g) = if parts.sigma || parts.aux {
        let spec = CellSpectral::new(grid);
        let cells: Vec<Vec<Vec<f64>>> = directions
            .iter()
            .map(|dc| edges_to_cells(&grid, &dc.flux.components))
            .collect();
        let sigma = if parts.sigma {
            cells
                .iter()
                .enumerate()
                .map(|(i, q)| tensor_field(grid, i, spec.sigma(q)))
                .collect()
        } else {
            Vec::new()
        };
        let g = if parts.aux {
            cells
                .iter()
                .map(|q| {
                    GridField::vector(
                        grid,
                        Location::Cell,
                        Support::Everywhere,
                        spec.aux(q, solver.t()),
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        (sigma, g)
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(CorrectorBundle {
        field,
        t: solver.t(),
        seed,
        directions,
        sigma,
        g,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomogenizedEstimate {
    /// Row `j`, column `i`: mean of the `j` component of `q_i`.
    pub a_hom: Vec<Vec<f64>>,
    pub volume_fraction_matrix: f64,
    pub residuals: Vec<f64>,
    pub symmetry_defect: f64,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub seed: u64,
}

impl HomogenizedEstimate {
    pub fn quadratic_form(&self, xi: &[f64]) -> f64 {
        let d = xi.len();
        (0..d)
            .flat_map(|j| (0..d).map(move |i| (i, j)))
            .map(|(i, j)| xi[j] * self.a_hom[j][i] * xi[i])
            .sum()
    }
}

pub fn homogenized_estimate(bundle: &CorrectorBundle) -> HomogenizedEstimate {
    let d = bundle.dimension();
    let mut a = vec![vec![0.0; d]; d];
    for (i, dc) in bundle.directions.iter().enumerate() {
        let means = dc.flux.means();
        for j in 0..d {
            a[j][i] = means[j];
        }
    }
    let mut defect = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            defect = defect.max((a[i][j] - a[j][i]).abs());
        }
    }
    HomogenizedEstimate {
        a_hom: a,
        volume_fraction_matrix: bundle.field.matrix_volume_fraction(),
        residuals: bundle.directions.iter().map(|d| d.stats.residual).collect(),
        symmetry_defect: defect,
        n: bundle.grid().n(),
        t: bundle.t,
        seed: bundle.seed,
    }
}
