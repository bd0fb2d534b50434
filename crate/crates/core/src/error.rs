use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("inclusion set is not admissible: {0}")]
    Inadmissible(String),

    #[error("point budget exceeded: expected {expected:.1} points, budget is {budget}")]
    PointBudgetExceeded { expected: f64, budget: usize },

    #[error(
        "solver did not converge: relative residual {residual:.3e} after {iterations} iterations \
         (tolerance {tolerance:.1e})"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("singular Gram matrix: condition number {0:.3e}")]
    SingularGram(f64),

    #[error("hole component {0} has no matrix neighbour, cannot extend")]
    IsolatedHole(usize),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("scale mismatch: {0}")]
    ScaleMismatch(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("failure budget exceeded: {failed} of {total} samples failed")]
    FailureBudget { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Solver-side failures count against the ensemble failure budget;
    /// everything else aborts a run.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Error::NonConvergence { .. } | Error::SingularGram(_))
    }
}
