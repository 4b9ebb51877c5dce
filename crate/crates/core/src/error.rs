use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("value out of numeric range: {0}")]
    NumericRange(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("matrix is not normal (defect {0:.3e})")]
    NotNormal(f64),
    #[error("matrix is not unitary (defect {0:.3e})")]
    NotUnitary(f64),
    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("series truncated too early: tail estimate {tail:.3e} exceeds {tolerance:.3e}")]
    Truncation { tail: f64, tolerance: f64 },
    #[error("no bracketing interval: {0}")]
    NoBracket(String),
    #[error("plateau not converged: {0}")]
    Unconverged(String),
    #[error("fit did not converge after {iterations} iterations")]
    FitNonConvergence { iterations: usize },
    #[error("singular Jacobian in fit")]
    SingularJacobian,
    #[error("constant dataset (variance {variance:.3e}); no fit performed")]
    ConstantData { variance: f64 },
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_) | Error::InvalidParameter(_) => 2,
            Error::FitNonConvergence { .. } | Error::SingularJacobian | Error::ConstantData { .. } => 4,
            _ => 3,
        }
    }
}
