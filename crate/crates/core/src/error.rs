use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
    Verification,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cholesky factorization failed: {0} is not positive definite")]
    CholeskyFailure(&'static str),

    #[error("symmetric eigensolver did not converge (size {0})")]
    EigenNonConvergence(usize),

    #[error("numeric consistency violated: {what} = {value:e} (tolerance {tolerance:e})")]
    NumericConsistency {
        what: &'static str,
        value: f64,
        tolerance: f64,
    },

    #[error("rho = {rho:e} is not below the smallest retained eigenvalue {smallest:e}")]
    RhoTooLarge { rho: f64, smallest: f64 },

    #[error("descriptors were fitted with different rho ({0:e} vs {1:e})")]
    RhoMismatch(f64, f64),

    #[error("descriptors were fitted with different kernels")]
    KernelMismatch,

    #[error("descriptor ranks differ ({0} vs {1}); the practical Stein form needs equal ranks")]
    RankMismatch(usize, usize),

    #[error("beta = {beta} does not give a positive definite Stein kernel for n = {n}")]
    SteinBetaInvalid { n: usize, beta: f64 },

    #[error("kernel has no finite explicit feature map: {0}")]
    UnsupportedKernel(String),

    #[error("feature dimension {dim} exceeds the materialization cap {cap}")]
    FeatureDimTooLarge { dim: usize, cap: usize },

    #[error("hyper-parameter grid is empty: {0}")]
    EmptyGrid(&'static str),

    #[error("entry ({i}, {j}): {source}")]
    AtPair {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("verification failed: {0}")]
    Verification(String),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::EmptyGrid(_) | Error::SteinBetaInvalid { .. } => ErrorCategory::Config,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::DimensionMismatch(_)
            | Error::NonFinite(_)
            | Error::InvalidInput(_)
            | Error::KernelMismatch
            | Error::RankMismatch(..)
            | Error::RhoMismatch(..)
            | Error::UnsupportedKernel(_)
            | Error::FeatureDimTooLarge { .. } => ErrorCategory::Data,
            Error::CholeskyFailure(_)
            | Error::EigenNonConvergence(_)
            | Error::NumericConsistency { .. }
            | Error::RhoTooLarge { .. } => ErrorCategory::Numeric,
            Error::Verification(_) => ErrorCategory::Verification,
            Error::AtPair { source, .. } => source.category(),
        }
    }

    pub(crate) fn at_pair(self, i: usize, j: usize) -> Error {
        Error::AtPair {
            i,
            j,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Error {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }
}
