//! Linear solvers on the periodic grid.
//!
//! The massive operator lives on matrix cells only. Per matrix cell `c`
//!
//! ```text
//! (h^d / T) u_c + h^(d-2) Σ_e a_e (u_c - u_nb(e)) = rhs_c
//! ```
//!
//! which is symmetric positive definite for every finite `T`, whatever the hole layout.

mod cg;
mod dense;
mod extension;
mod massive;
mod spectral;

use serde::{Deserialize, Serialize};

pub use extension::{extension_norm_bounds, harmonic_extension, Extension, ExtensionBounds};
pub use massive::{apply_massive, solve_massive, MassiveOperator};
pub use spectral::{apply_spectral_operator, solve_spectral, SpectralOperator};

pub(crate) use dense::{cholesky_factor, cholesky_solve};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    #[default]
    Diagonal,
    /// Constant-coefficient massive operator on the whole torus, inverted by FFT and
    /// restricted to the matrix. Iteration counts stay flat under refinement.
    Spectral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub relative_tolerance: f64,
    /// `None` means `50 n`.
    pub max_iterations: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            relative_tolerance: 1e-10,
            max_iterations: None,
            preconditioner: Preconditioner::Diagonal,
        }
    }
}

impl SolverConfig {
    pub fn spectral() -> Self {
        Self {
            preconditioner: Preconditioner::Spectral,
            ..Self::default()
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.relative_tolerance = tol;
        self
    }

    pub fn max_iterations_for(&self, cells_per_side: usize) -> usize {
        self.max_iterations.unwrap_or(50 * cells_per_side)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.relative_tolerance > 0.0 && self.relative_tolerance < 1.0) {
            return Err(Error::param(format!(
                "relative_tolerance must lie in (0, 1), got {}",
                self.relative_tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::param("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub op: String,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub iterations: usize,
    pub residual: f64,
    pub seconds: f64,
}
