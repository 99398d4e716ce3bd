use loft_core::optimizer::FitError;

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Flags that are individually valid but do not fit together.
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] loft_core::Error),

    #[error(transparent)]
    Fit(#[from] FitError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// 2 for usage errors, 3 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Fit(e) if e.error.is_numerical() => 3,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
