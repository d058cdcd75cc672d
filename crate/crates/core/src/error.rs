use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("point outside the problem domain: {0}")]
    Domain(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("singular mass matrix (condition estimate {cond:.3e})")]
    SingularMass { cond: f64 },
    #[error("singular control: {0}")]
    SingularControl(String),
    #[error("regularity violation: {0}")]
    RegularityViolation(String),
    #[error("control cannot be recovered from the acceleration: {0}")]
    NotInvertible(String),
    #[error("Legendre inversion failed: {0}")]
    Legendre(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("wrong chart: expected {expected}, got {got}")]
    Chart { expected: String, got: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
}
