use thiserror::Error;

#[derive(Debug, Error)]
pub enum QbcError {
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),

    #[error("not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),

    #[error("not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("trace is {0}, expected {1}")]
    BadTrace(f64, f64),

    #[error("subsystem dims {0:?} do not factor dimension {1}")]
    BadFactorization(Vec<usize>, usize),

    #[error("total dimension {0} exceeds cap {1}")]
    DimCapExceeded(usize, usize),

    #[error("unknown register `{0}`")]
    UnknownRegister(String),

    #[error("invalid input at `{path}`: {message}")]
    BadInput { path: String, message: String },

    #[error("invalid Renyi order {0}: must lie in (0,1) or (1,inf)")]
    BadOrder(f64),

    #[error("markov constraint violated: {0}")]
    MarkovViolation(String),

    #[error("invalid request: {0}")]
    BadRequest(String),

    #[error("polytope is unbounded; add box constraints before comparing")]
    Unbounded,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, QbcError>;
