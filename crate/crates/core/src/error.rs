use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("chart: {0}")]
    Chart(String),

    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("mesh: {0}")]
    Mesh(String),

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("weight is not positive ({value:e}) at ({x:e}, {y:e})")]
    NonPositiveWeight { value: f64, x: f64, y: f64 },

    #[error("linear algebra: {0}")]
    LinAlg(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
