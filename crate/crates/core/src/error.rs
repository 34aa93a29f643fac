use thiserror::Error;

/// Errors raised by the decomposition pipeline.
///
/// Variants fall into three classes used by the CLI exit-code contract:
/// input errors, numerical failures, and verification failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not Hermitian (relative deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("eigensolver failed to converge on a {dim}x{dim} matrix")]
    ConvergenceFailure { dim: usize },

    #[error("function is not finite at eigenvalue {eigenvalue:.6e}")]
    DomainError { eigenvalue: f64 },

    #[error("ambiguous rank: value {value:.3e} lies within a factor 10 of the cut {cut:.3e} ({context})")]
    AmbiguousRank {
        value: f64,
        cut: f64,
        context: &'static str,
    },

    #[error("algebra closure did not stabilise after {rounds} rounds")]
    NonConvergence { rounds: usize },

    #[error("reference state is not faithful (min eigenvalue {min_eigenvalue:.3e})")]
    NotFaithful { min_eigenvalue: f64 },

    #[error("subalgebra is not invariant under the modular flow: {0}")]
    NotInvariant(String),

    #[error("generic-element sampling failed after {attempts} attempts ({what})")]
    RetriesExhausted { what: &'static str, attempts: usize },

    #[error("block of rank {rank} is not an integral multiple of factor size {n}")]
    NonIntegralMultiplicity { rank: usize, n: usize },

    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("experiment is not classical: block {block} has n = {n} > 1")]
    NotClassical { block: usize, n: usize },

    #[error("no block matching achieves q-factorisation residual <= {tolerance:.1e} (best {best:.3e})")]
    MatchingFailed { best: f64, tolerance: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse classification of an [`Error`], mirrored by CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numerical,
    Verification,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::ShapeMismatch(_)
            | Error::NotHermitian { .. }
            | Error::NotPsd { .. }
            | Error::InvalidInput(_)
            | Error::Json(_)
            | Error::Io(_) => ErrorClass::Input,
            Error::ConvergenceFailure { .. }
            | Error::DomainError { .. }
            | Error::AmbiguousRank { .. }
            | Error::NonConvergence { .. }
            | Error::NotFaithful { .. }
            | Error::RetriesExhausted { .. }
            | Error::NonIntegralMultiplicity { .. } => ErrorClass::Numerical,
            Error::NotInvariant(_)
            | Error::VerificationFailed(_)
            | Error::NotClassical { .. }
            | Error::MatchingFailed { .. } => ErrorClass::Verification,
        }
    }

    /// Process exit code: 1 input error, 2 numerical failure, 3 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Input => 1,
            ErrorClass::Numerical => 2,
            ErrorClass::Verification => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
