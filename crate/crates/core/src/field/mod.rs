//! Degenerate coefficient fields on the periodic grid.
//!
//! A cell is a hole cell iff its center lies inside an inclusion. Conductances live on
//! the edges between face-adjacent cells: the arithmetic mean of the two cell values
//! when both are matrix cells, and exactly zero otherwise.

mod components;
mod grid;
mod raster;

pub use components::{
    hole_components, label_components, matrix_components, Components, UNLABELLED,
};
pub use grid::Grid;
pub use raster::{rasterize, CoefficientField, Profile, RasterWarning};

/// Where the values of a [`GridField`] live.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    /// Cell centers.
    Cell,
    /// Component `k` sits on the edge between cell `c` and its forward neighbour along `k`.
    Edge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    Everywhere,
    /// Values on hole cells (or hole-touching edges) carry no meaning.
    MatrixOnly,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Scalar,
    Vector,
    /// Component labels `(i, j, k)`.
    Tensor(Vec<(usize, usize, usize)>),
}

/// Scalar, vector or tensor data on a grid, stored component by component.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub grid: Grid,
    pub kind: FieldKind,
    pub location: Location,
    pub support: Support,
    pub components: Vec<Vec<f64>>,
}

impl GridField {
    pub fn scalar(grid: Grid, support: Support, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self {
            grid,
            kind: FieldKind::Scalar,
            location: Location::Cell,
            support,
            components: vec![data],
        }
    }

    pub fn zeros(grid: Grid, support: Support) -> Self {
        Self::scalar(grid, support, vec![0.0; grid.len()])
    }

    pub fn vector(grid: Grid, location: Location, support: Support, comps: Vec<Vec<f64>>) -> Self {
        Self {
            grid,
            kind: FieldKind::Vector,
            location,
            support,
            components: comps,
        }
    }

    /// The single component of a scalar field.
    pub fn values(&self) -> &[f64] {
        &self.components[0]
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.components[0]
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().flatten().all(|x| x.is_finite())
    }

    /// Spatial average of each component over all cells.
    pub fn means(&self) -> Vec<f64> {
        let n = self.grid.len() as f64;
        self.components
            .iter()
            .map(|c| c.iter().sum::<f64>() / n)
            .collect()
    }
}
