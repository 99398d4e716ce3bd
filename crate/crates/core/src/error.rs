use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A matrix that must have full column rank does not.
    #[error("degenerate direction: column {column} has norm {norm:.3e} after orthogonalization")]
    DegenerateDirection { column: usize, norm: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal residual {residual:.3e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A covariance with zero trace, i.e. an empty or constant-feature split.
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    #[error("degenerate spectrum: largest eigenvalue {0:.3e} is not positive")]
    DegenerateSpectrum(f64),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    /// Attaches a file path to the error.
    pub fn at_path(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with any path context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::File { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerics rather than of the inputs or IO.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::DegenerateDirection { .. }
                | Error::NoConvergence { .. }
                | Error::NumericalFailure(_)
                | Error::DegenerateCovariance(_)
                | Error::DegenerateSpectrum(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
