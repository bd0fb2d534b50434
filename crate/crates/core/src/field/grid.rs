use crate::error::{Error, Result};

/// Cell-centered periodic grid on the box `[0, L)^d` with `n` cells per side.
///
/// Cells are numbered with axis 0 fastest: `idx = i0 + n * (i1 + n * i2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub dimension: usize,
    pub cells_per_side: usize,
    pub box_side: f64,
}

impl Grid {
    pub fn new(dimension: usize, cells_per_side: usize, box_side: f64) -> Result<Self> {
        if dimension != 2 && dimension != 3 {
            return Err(Error::param(format!(
                "dimension must be 2 or 3, got {dimension}"
            )));
        }
        if cells_per_side < 4 || !cells_per_side.is_power_of_two() {
            return Err(Error::param(format!(
                "cells per side must be a power of two >= 4, got {cells_per_side}"
            )));
        }
        if !(box_side > 0.0 && box_side.is_finite()) {
            return Err(Error::param(format!(
                "box side must be positive, got {box_side}"
            )));
        }
        Ok(Self {
            dimension,
            cells_per_side,
            box_side,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.cells_per_side
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.box_side / self.cells_per_side as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.cells_per_side.pow(self.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dimension as i32)
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.cells_per_side.pow(axis as u32)
    }

    #[inline]
    pub fn coord(&self, idx: usize, axis: usize) -> usize {
        (idx / self.stride(axis)) % self.cells_per_side
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let mut c = [0; 3];
        let mut r = idx;
        for slot in c.iter_mut().take(self.dimension) {
            *slot = r % self.cells_per_side;
            r /= self.cells_per_side;
        }
        c
    }

    /// Index of the cell with the given (wrapped) integer coordinates.
    pub fn index_wrapped(&self, coords: &[i64]) -> usize {
        let n = self.cells_per_side as i64;
        let mut idx = 0usize;
        for k in (0..self.dimension).rev() {
            idx = idx * self.cells_per_side + coords[k].rem_euclid(n) as usize;
        }
        idx
    }

    /// Neighbour one step forward along `axis`, with wrap-around.
    #[inline]
    pub fn forward(&self, idx: usize, axis: usize) -> usize {
        let s = self.stride(axis);
        if (idx / s) % self.cells_per_side == self.cells_per_side - 1 {
            idx + s - s * self.cells_per_side
        } else {
            idx + s
        }
    }

    /// Neighbour one step backward along `axis`, with wrap-around.
    #[inline]
    pub fn backward(&self, idx: usize, axis: usize) -> usize {
        let s = self.stride(axis);
        if (idx / s) % self.cells_per_side == 0 {
            idx + s * self.cells_per_side - s
        } else {
            idx - s
        }
    }

    pub fn cell_center(&self, idx: usize) -> [f64; 3] {
        let h = self.spacing();
        let c = self.coords(idx);
        let mut x = [0.0; 3];
        for k in 0..self.dimension {
            x[k] = (c[k] as f64 + 0.5) * h;
        }
        x
    }

    /// Precomputed forward/backward neighbour tables, one pair per axis.
    pub fn neighbour_tables(&self) -> Vec<(Vec<u32>, Vec<u32>)> {
        (0..self.dimension)
            .map(|k| {
                let fwd = (0..self.len()).map(|i| self.forward(i, k) as u32).collect();
                let bwd = (0..self.len())
                    .map(|i| self.backward(i, k) as u32)
                    .collect();
                (fwd, bwd)
            })
            .collect()
    }

    /// Minimum-image displacement from `origin` to the center of cell `idx`.
    pub fn displacement(&self, origin: &[f64], idx: usize) -> [f64; 3] {
        let x = self.cell_center(idx);
        let mut d = [0.0; 3];
        for k in 0..self.dimension {
            d[k] = crate::geometry::wrap_delta(x[k] - origin[k], self.box_side);
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_resolution() {
        assert!(Grid::new(2, 6, 1.0).is_err());
        assert!(Grid::new(2, 2, 1.0).is_err());
        assert!(Grid::new(4, 8, 1.0).is_err());
    }

    #[test]
    fn wrap_around_neighbours() {
        let g = Grid::new(3, 4, 1.0).unwrap();
        for idx in 0..g.len() {
            for k in 0..3 {
                assert_eq!(g.backward(g.forward(idx, k), k), idx);
            }
        }
        assert_eq!(g.forward(3, 0), 0);
        assert_eq!(g.backward(0, 1), 12);
        assert_eq!(g.index_wrapped(&[-1, 0, 4]), 3);
    }
}
