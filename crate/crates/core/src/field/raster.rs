use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Grid;
use crate::error::{Error, Result};
use crate::geometry::{wrap_delta, InclusionSet};

/// Values assigned to matrix cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// Constant value `a_0` on the matrix.
    Isotropic { value: f64 },
    /// I.i.d. uniform values in `[a_minus, a_plus]` per cell.
    Iid {
        a_minus: f64,
        a_plus: f64,
        seed: u64,
    },
    /// Layers normal to `axis`: `values[0]` on the first half of every period, `values[1]`
    /// on the second.
    Stripes {
        axis: usize,
        values: [f64; 2],
        period_cells: usize,
    },
}

impl Default for Profile {
    fn default() -> Self {
        Profile::Isotropic { value: 1.0 }
    }
}

impl Profile {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Profile::Isotropic { value } => (value, value),
            Profile::Iid {
                a_minus, a_plus, ..
            } => (a_minus, a_plus),
            Profile::Stripes { values, .. } => (values[0].min(values[1]), values[0].max(values[1])),
        }
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        let (lo, hi) = self.bounds();
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::param(format!(
                "profile bounds must satisfy 0 < a- <= a+, got {self:?}"
            )));
        }
        if let Profile::Stripes {
            axis, period_cells, ..
        } = *self
        {
            if axis >= dimension || period_cells < 2 {
                return Err(Error::param(format!("bad stripe layout {self:?}")));
            }
        }
        Ok(())
    }

    fn cell_values(&self, grid: &Grid) -> Vec<f64> {
        match *self {
            Profile::Isotropic { value } => vec![value; grid.len()],
            Profile::Iid {
                a_minus,
                a_plus,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..grid.len())
                    .map(|_| {
                        if a_plus > a_minus {
                            rng.gen_range(a_minus..=a_plus)
                        } else {
                            a_minus
                        }
                    })
                    .collect()
            }
            Profile::Stripes {
                axis,
                values,
                period_cells,
            } => (0..grid.len())
                .map(|i| {
                    let c = grid.coord(i, axis) % period_cells;
                    if c < period_cells / 2 {
                        values[0]
                    } else {
                        values[1]
                    }
                })
                .collect(),
        }
    }
}

/// An inclusion too small to contain any cell center at the chosen resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterWarning {
    pub inclusion: usize,
    pub radius: f64,
    pub spacing: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    pub grid: Grid,
    /// `true` on matrix cells.
    pub matrix_mask: Vec<bool>,
    /// In `[a_minus, a_plus]` on matrix cells, exactly zero on hole cells.
    pub cell_value: Vec<f64>,
    /// `edge_conductance[k][c]` couples cell `c` with its forward neighbour along `k`.
    pub edge_conductance: Vec<Vec<f64>>,
    pub a_minus: f64,
    pub a_plus: f64,
    pub warnings: Vec<RasterWarning>,
}

impl CoefficientField {
    /// Build a field from an explicit matrix mask and per-cell values.
    pub fn from_mask(grid: Grid, matrix_mask: Vec<bool>, values: Vec<f64>) -> Self {
        assert_eq!(matrix_mask.len(), grid.len());
        assert_eq!(values.len(), grid.len());
        let cell_value: Vec<f64> = values
            .iter()
            .zip(&matrix_mask)
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        let (a_minus, a_plus) = cell_value
            .iter()
            .filter(|v| **v > 0.0)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let edge_conductance = (0..grid.dimension)
            .map(|k| {
                (0..grid.len())
                    .map(|c| {
                        let f = grid.forward(c, k);
                        if matrix_mask[c] && matrix_mask[f] {
                            0.5 * (cell_value[c] + cell_value[f])
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            grid,
            matrix_mask,
            cell_value,
            edge_conductance,
            a_minus: if a_minus.is_finite() { a_minus } else { 0.0 },
            a_plus,
            warnings: Vec::new(),
        }
    }

    /// Homogeneous field without holes.
    pub fn uniform(grid: Grid, value: f64) -> Self {
        Self::from_mask(grid, vec![true; grid.len()], vec![value; grid.len()])
    }

    pub fn matrix_cell_count(&self) -> usize {
        self.matrix_mask.iter().filter(|m| **m).count()
    }

    pub fn matrix_volume_fraction(&self) -> f64 {
        self.matrix_cell_count() as f64 / self.grid.len() as f64
    }

    pub fn hole_volume_fraction(&self) -> f64 {
        1.0 - self.matrix_volume_fraction()
    }

    /// `true` where the edge `(c, c + e_k)` carries conductance.
    #[inline]
    pub fn edge_active(&self, axis: usize, cell: usize) -> bool {
        self.edge_conductance[axis][cell] > 0.0
    }
}

/// Cell-centered rasterization: a cell is a hole iff its center lies in an open ball.
pub fn rasterize(
    set: &InclusionSet,
    cells_per_side: usize,
    profile: &Profile,
) -> Result<CoefficientField> {
    let grid = Grid::new(set.dimension, cells_per_side, set.box_side)?;
    profile.validate(set.dimension)?;
    let h = grid.spacing();
    let n = grid.n() as i64;
    let d = grid.dimension;
    let mut matrix = vec![true; grid.len()];
    let mut warnings = Vec::new();

    for (k, inc) in set.inclusions.iter().enumerate() {
        let lo: Vec<i64> = (0..d)
            .map(|a| ((inc.center[a] - inc.radius) / h - 0.5).floor() as i64)
            .collect();
        let hi: Vec<i64> = (0..d)
            .map(|a| ((inc.center[a] + inc.radius) / h - 0.5).ceil() as i64)
            .collect();
        let span: Vec<i64> = (0..d).map(|a| (hi[a] - lo[a] + 1).min(n)).collect();
        let total: i64 = span.iter().product();
        let mut covered = 0usize;
        let mut coords = vec![0i64; d];
        let r2 = inc.radius * inc.radius;
        for t in 0..total {
            let mut r = t;
            let mut dist2 = 0.0;
            for a in 0..d {
                coords[a] = lo[a] + r % span[a];
                r /= span[a];
                let x = (coords[a] as f64 + 0.5) * h;
                let dx = wrap_delta(x - inc.center[a], set.box_side);
                dist2 += dx * dx;
            }
            if dist2 < r2 {
                let idx = grid.index_wrapped(&coords);
                if matrix[idx] {
                    covered += 1;
                }
                matrix[idx] = false;
            }
        }
        if covered == 0 && inc.radius > 0.0 {
            warnings.push(RasterWarning {
                inclusion: k,
                radius: inc.radius,
                spacing: h,
            });
        }
    }

    let mut field = CoefficientField::from_mask(grid, matrix, profile.cell_values(&grid));
    let (lo, hi) = profile.bounds();
    field.a_minus = lo;
    field.a_plus = hi;
    field.warnings = warnings;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_lattice_iid, Inclusion, LatticeParams, RadiusLaw};

    #[test]
    fn empty_set_gives_full_matrix() {
        let set = InclusionSet::empty(1.0, 2);
        let f = rasterize(&set, 16, &Profile::Isotropic { value: 1.0 }).unwrap();
        assert!(f.matrix_mask.iter().all(|m| *m));
        assert!(f.edge_conductance.iter().flatten().all(|a| *a == 1.0));
    }

    #[test]
    fn disk_area_converges() {
        let set =
            InclusionSet::manual(1.0, 2, 1.0, 1.0, vec![Inclusion::new(vec![0.5, 0.5], 0.25)]);
        let exact = std::f64::consts::PI / 16.0;
        let mut last = f64::INFINITY;
        for n in [64usize, 128, 256, 512] {
            let f = rasterize(&set, n, &Profile::default()).unwrap();
            let err = (f.hole_volume_fraction() - exact).abs();
            assert!(err <= 1.0 / n as f64, "n={n} err={err}");
            assert!(err < last, "error not decreasing at n={n}");
            last = err;
        }
    }

    #[test]
    fn conductance_vanishes_exactly_next_to_holes() {
        let p = LatticeParams {
            box_side: 4.0,
            dimension: 2,
            radius_law: RadiusLaw::Uniform { lo: 0.1, hi: 0.24 },
            diameter_cap: 0.5,
            separation: None,
        };
        let set = sample_lattice_iid(&p, 2).unwrap();
        let f = rasterize(
            &set,
            16,
            &Profile::Iid {
                a_minus: 0.5,
                a_plus: 2.0,
                seed: 9,
            },
        )
        .unwrap();
        assert!(f.matrix_mask.iter().any(|m| !m));
        for k in 0..2 {
            for c in 0..f.grid.len() {
                let nb = f.grid.forward(c, k);
                let touches = !f.matrix_mask[c] || !f.matrix_mask[nb];
                let a = f.edge_conductance[k][c];
                assert_eq!(a == 0.0, touches);
                if !touches {
                    assert!((0.5..=2.0).contains(&a));
                }
            }
        }
        for (v, m) in f.cell_value.iter().zip(&f.matrix_mask) {
            assert_eq!(*v > 0.0, *m);
        }
    }

    #[test]
    fn tiny_inclusion_is_reported() {
        let set =
            InclusionSet::manual(1.0, 2, 1.0, 0.5, vec![Inclusion::new(vec![0.0, 0.0], 0.01)]);
        let f = rasterize(&set, 8, &Profile::default()).unwrap();
        assert_eq!(f.warnings.len(), 1);
        assert_eq!(f.matrix_cell_count(), 64);
    }

    #[test]
    fn stripes_alternate() {
        let set = InclusionSet::empty(8.0, 2);
        let f = rasterize(
            &set,
            8,
            &Profile::Stripes {
                axis: 0,
                values: [1.0, 4.0],
                period_cells: 4,
            },
        )
        .unwrap();
        let row: Vec<f64> = (0..8).map(|i| f.cell_value[i]).collect();
        assert_eq!(row, vec![1.0, 1.0, 4.0, 4.0, 1.0, 1.0, 4.0, 4.0]);
        assert_eq!(f.edge_conductance[0][1], 2.5);
        assert_eq!(f.edge_conductance[1][2], 4.0);
    }
}
