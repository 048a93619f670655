use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degree {k} out of range for dimension {n}")]
    Degree { k: usize, n: usize },
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("form mismatch: {0}")]
    Mismatch(String),
    #[error("cell outside the box: {0}")]
    OutsideBox(String),
    #[error("value on a boundary cell under zero boundary conditions")]
    BoundaryValue,
    #[error("inconsistent input: {0}")]
    Inconsistent(String),
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("rank ambiguity: {0}")]
    RankAmbiguity(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("snapshot format: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
