use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is singular (smallest shifted eigenvalue {min_eigenvalue:e}); calibrate the kernel or raise the ridge")]
    Singular { min_eigenvalue: f64 },
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("matrix is not unitary (max deviation {deviation:e})")]
    NotUnitary { deviation: f64 },
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("kernel has provenance {found}, expected {expected}")]
    WrongProvenance { expected: &'static str, found: &'static str },
    #[error("requested {requested} components but the data has rank {rank}")]
    RankDeficient { requested: usize, rank: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
