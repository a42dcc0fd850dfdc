//! Error type shared across the library.
//!
//! The variants mirror the failure classes the operations distinguish:
//! configuration problems (bad grids, incompatible groups, invalid
//! parameters), violated mathematical preconditions, evaluation at a
//! singular point of a Green function, under-resolved grids, and numerical
//! failures such as a stalled line search.

use thiserror::Error;

/// Errors produced by the torus, spectral, Green-function, solver, and
/// certificate operations.
#[derive(Debug, Error)]
pub enum MeanFieldError {
    /// Invalid configuration: incompatible grid, malformed group, bad
    /// parameter ranges, overlapping exclusion balls, and similar.
    #[error("configuration error: {0}")]
    Config(String),

    /// A mathematical precondition of the operation does not hold for the
    /// given input (nonzero mean, field outside the invariant subspace,
    /// zero Dirichlet energy, point not a maximizer).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Evaluation requested at (or too close to) a singular point of a
    /// Green function or of the lattice series.
    #[error("singular point: {0}")]
    Singularity(String),

    /// The grid cannot resolve the requested scale.
    #[error("under-resolved: {0}")]
    Resolution(String),

    /// A numerical procedure failed to reach its target (non-convergence,
    /// non-finite intermediate values).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// File input/output failure while persisting or loading grid data.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, MeanFieldError>;
