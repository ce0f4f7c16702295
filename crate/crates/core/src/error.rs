use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Exhausted,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("matrix is not Hurwitz (largest eigenvalue real part {max_re:.6e})")]
    NotHurwitz { max_re: f64 },

    #[error("eigenvalue iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("assembled gradient deviation ratio {ratio:.6e} exceeds theta = {theta}")]
    BudgetViolation { ratio: f64, theta: f64 },

    #[error("iterate {iteration} left the stabilizing set; retry with sigma <= {suggested_sigma:.6e}")]
    StepSize { iteration: usize, suggested_sigma: f64 },

    #[error("perturbation radius {radius:.3e} destabilizes the gain in every resample; use a smaller radius")]
    Radius { radius: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("iteration limit of {0} reached before convergence")]
    IterationLimit(usize),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Dimension(_) | Error::Validation(_) | Error::Format { .. } => ErrorKind::Validation,
            Error::NotHurwitz { .. }
            | Error::NoConvergence { .. }
            | Error::Numerical(_)
            | Error::StepSize { .. }
            | Error::Radius { .. }
            | Error::InsufficientData(_) => ErrorKind::Numerical,
            Error::Budget(_) | Error::BudgetViolation { .. } | Error::IterationLimit(_) => {
                ErrorKind::Exhausted
            }
            Error::Io { .. } => ErrorKind::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
