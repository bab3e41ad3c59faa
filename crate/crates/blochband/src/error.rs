use thiserror::Error;

/// Errors produced by geometry construction, assembly and the eigensolvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid operator specification: {0}")]
    InvalidSpec(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("eigensolver did not converge within {iterations} iterations (worst residual {worst_residual:.3e})")]
    NoConvergence {
        iterations: usize,
        worst_residual: f64,
        /// Best eigenvalue estimates at the point of failure.
        estimates: Vec<f64>,
        residuals: Vec<f64>,
    },

    #[error("eigensolver failed at theta = {theta:?}, lambda = {lambda}: {source}")]
    FiberSolve {
        theta: Vec<f64>,
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension cap exceeded: {dim} > {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
