use std::time::Instant;

use rustfft::num_complex::Complex64;

use super::cg::pcg;
use super::{Preconditioner, SolveStats, SolverConfig};
use crate::error::{Error, Result};
use crate::fft::{laplacian_symbol, FftNd};
use crate::field::{CoefficientField, Grid, GridField, Support};

const NONE: u32 = u32::MAX;

struct SpectralPrec {
    fft: FftNd,
    inv_symbol: Vec<f64>,
}

/// The massive operator assembled on the matrix cells of a field.
pub struct MassiveOperator {
    grid: Grid,
    t: f64,
    cells: Vec<u32>,
    local: Vec<u32>,
    nbr: Vec<u32>,
    cond: Vec<f64>,
    diag: Vec<f64>,
    spectral: Option<SpectralPrec>,
}

impl MassiveOperator {
    pub fn new(field: &CoefficientField, t: f64, preconditioner: Preconditioner) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::param(format!("T must be positive, got {t}")));
        }
        let grid = field.grid;
        let d = grid.dimension;
        let h = grid.spacing();
        let mass = h.powi(d as i32) / t;
        let scale = h.powi(d as i32 - 2);

        let mut local = vec![NONE; grid.len()];
        let mut cells = Vec::new();
        for (c, &m) in field.matrix_mask.iter().enumerate() {
            if m {
                local[c] = cells.len() as u32;
                cells.push(c as u32);
            }
        }
        let m = cells.len();
        let mut nbr = vec![0u32; m * 2 * d];
        let mut cond = vec![0.0; m * 2 * d];
        let mut diag = vec![mass; m];
        let mut sum_a = 0.0;
        let mut active = 0usize;
        for (i, &c) in cells.iter().enumerate() {
            let c = c as usize;
            for k in 0..d {
                let f = grid.forward(c, k);
                let b = grid.backward(c, k);
                let af = field.edge_conductance[k][c];
                let ab = field.edge_conductance[k][b];
                if af > 0.0 {
                    sum_a += af;
                    active += 1;
                    nbr[i * 2 * d + 2 * k] = local[f];
                    cond[i * 2 * d + 2 * k] = scale * af;
                }
                if ab > 0.0 {
                    nbr[i * 2 * d + 2 * k + 1] = local[b];
                    cond[i * 2 * d + 2 * k + 1] = scale * ab;
                }
                diag[i] += scale * (af + ab);
            }
        }

        let spectral = (preconditioner == Preconditioner::Spectral).then(|| {
            let a_bar = if active > 0 {
                sum_a / active as f64
            } else {
                1.0
            };
            let h2 = h * h;
            let inv_symbol = laplacian_symbol(&grid)
                .into_iter()
                .map(|s| 1.0 / (mass + scale * a_bar * h2 * s))
                .collect();
            SpectralPrec {
                fft: FftNd::new(grid),
                inv_symbol,
            }
        });

        Ok(Self {
            grid,
            t,
            cells,
            local,
            nbr,
            cond,
            diag,
            spectral,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn matrix_len(&self) -> usize {
        self.cells.len()
    }

    /// `y = A x` on compressed (matrix-only) vectors.
    pub fn apply_compressed(&self, x: &[f64], y: &mut [f64]) {
        let w = 2 * self.grid.dimension;
        for i in 0..self.cells.len() {
            let mut s = self.diag[i] * x[i];
            let row = i * w;
            for j in row..row + w {
                s -= self.cond[j] * x[self.nbr[j] as usize];
            }
            y[i] = s;
        }
    }

    pub fn compress(&self, full: &[f64]) -> Vec<f64> {
        self.cells.iter().map(|&c| full[c as usize]).collect()
    }

    /// Scatter a compressed vector to the grid; hole cells get zero.
    pub fn expand(&self, compressed: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (&c, &v) in self.cells.iter().zip(compressed) {
            out[c as usize] = v;
        }
        out
    }

    /// Compressed index of a grid cell, `None` on holes.
    pub fn local_index(&self, cell: usize) -> Option<usize> {
        let l = self.local[cell];
        (l != NONE).then_some(l as usize)
    }

    fn precondition(&self, kind: Preconditioner, r: &[f64], z: &mut [f64]) {
        match (kind, &self.spectral) {
            (Preconditioner::Spectral, Some(sp)) => {
                let mut buf = vec![Complex64::default(); self.grid.len()];
                for (&c, &v) in self.cells.iter().zip(r) {
                    buf[c as usize].re = v;
                }
                sp.fft.forward(&mut buf);
                for (b, s) in buf.iter_mut().zip(&sp.inv_symbol) {
                    *b *= *s;
                }
                sp.fft.inverse(&mut buf);
                for (zi, &c) in z.iter_mut().zip(&self.cells) {
                    *zi = buf[c as usize].re;
                }
            }
            (Preconditioner::None, _) => z.copy_from_slice(r),
            _ => {
                for i in 0..r.len() {
                    z[i] = r[i] / self.diag[i];
                }
            }
        }
    }

    /// Solve `A u = rhs` for a full-grid right-hand side (hole entries ignored).
    pub fn solve(
        &self,
        rhs: &[f64],
        cfg: &SolverConfig,
        op: &str,
    ) -> Result<(Vec<f64>, SolveStats)> {
        cfg.validate()?;
        let start = Instant::now();
        let b = self.compress(rhs);
        let mut x = vec![0.0; b.len()];
        let kind = if cfg.preconditioner == Preconditioner::Spectral && self.spectral.is_none() {
            Preconditioner::Diagonal
        } else {
            cfg.preconditioner
        };
        let max_it = cfg.max_iterations_for(self.grid.n());
        let out = pcg(
            |x, y| self.apply_compressed(x, y),
            |r, z| self.precondition(kind, r, z),
            &b,
            &mut x,
            cfg.relative_tolerance,
            max_it,
        );
        if !out.converged {
            return Err(Error::NonConvergence {
                iterations: out.iterations,
                residual: out.residual,
                tolerance: cfg.relative_tolerance,
            });
        }
        let stats = SolveStats {
            op: op.to_string(),
            n: self.grid.n(),
            t: self.t,
            iterations: out.iterations,
            residual: out.residual,
            seconds: start.elapsed().as_secs_f64(),
        };
        Ok((self.expand(&x), stats))
    }
}

/// Solve the massive equation on the matrix of `field`.
pub fn solve_massive(
    field: &CoefficientField,
    t: f64,
    rhs: &GridField,
    cfg: &SolverConfig,
) -> Result<(GridField, SolveStats)> {
    let op = MassiveOperator::new(field, t, cfg.preconditioner)?;
    let (u, stats) = op.solve(rhs.values(), cfg, "solve_massive")?;
    Ok((GridField::scalar(field.grid, Support::MatrixOnly, u), stats))
}

/// Apply the massive operator to a matrix-only field; hole cells of the result are zero.
pub fn apply_massive(field: &CoefficientField, t: f64, u: &GridField) -> Result<GridField> {
    let op = MassiveOperator::new(field, t, Preconditioner::None)?;
    let x = op.compress(u.values());
    let mut y = vec![0.0; x.len()];
    op.apply_compressed(&x, &mut y);
    Ok(GridField::scalar(
        field.grid,
        Support::MatrixOnly,
        op.expand(&y),
    ))
}
