use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    /// Input outside the mathematical domain of an operation (e.g. a zero matrix).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration or parameter combination.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Mismatched vector or matrix dimensions.
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    /// Index outside the declared matrix shape.
    #[error("index ({row}, {col}) out of bounds for {nrows}x{ncols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },

    /// The direct solver failed or produced an inaccurate solution.
    #[error("linear solver failed: {message} (backward error {backward_error:.3e})")]
    Solver {
        message: String,
        backward_error: f64,
    },

    /// Derivative requested at a point where the exact solution is not differentiable.
    #[error("degenerate point ({0}, {1})")]
    DegeneratePoint(f64, f64),

    /// A mesh invariant was violated after refinement.
    #[error("mesh invariant violated: {0}")]
    MeshInvariant(String),

    /// Point outside the computational domain.
    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),
}

pub type Result<T> = std::result::Result<T, FemError>;
