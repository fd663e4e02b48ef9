use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("quadrature did not reach tolerance {tol:e} (last error estimate {estimate:e}, dimension {dim})")]
    Quadrature { tol: f64, estimate: f64, dim: usize },
    #[error("rejection sampler acceptance below {threshold:e} at vertex {vertex}; use importance mode")]
    Rejection { vertex: usize, threshold: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
