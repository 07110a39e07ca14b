use thiserror::Error;

use crate::optim::TrainTrace;

/// Why a state solve was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    SingularSystem,
    KernelCoercivityViolated,
    InfSupViolated,
}

impl std::fmt::Display for FailureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FailureKind::SingularSystem => "singular system",
            FailureKind::KernelCoercivityViolated => "kernel-coercivity violated",
            FailureKind::InfSupViolated => "inf-sup violated",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {0:?} lies outside the domain")]
    OutOfDomain(Vec<f64>),

    #[error("singular matrix: pivot {pivot:.3e} in column {column} (scale {scale:.3e})")]
    SingularMatrix { pivot: f64, column: usize, scale: f64 },

    #[error("solver failure ({kind}): {detail}")]
    SolverFailure { kind: FailureKind, detail: String },

    #[error("optimizer diverged at iteration {iteration}: non-finite cost")]
    Diverged { iteration: usize, trace: Box<TrainTrace> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn failure(kind: FailureKind, detail: impl Into<String>) -> Self {
        Error::SolverFailure { kind, detail: detail.into() }
    }

    /// Errors caused by the numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularMatrix { .. } | Error::SolverFailure { .. } | Error::Diverged { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
