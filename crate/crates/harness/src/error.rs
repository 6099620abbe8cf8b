use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("quadrature overflow: {0}")]
    QuadratureOverflow(String),

    #[error("histograms have different bin edges")]
    BinMismatch,

    #[error("expected dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error(transparent)]
    Core(#[from] egi_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub(crate) fn validation(key: &str, message: impl Into<String>) -> Self {
        HarnessError::Validation {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse { .. } | HarnessError::Validation { .. } => 1,
            HarnessError::Core(e) if is_config_error(e) => 1,
            _ => 2,
        }
    }
}

fn is_config_error(e: &egi_core::Error) -> bool {
    use egi_core::Error::*;
    matches!(
        e,
        InvalidConfig(_) | UnknownPotential(_) | BadDimension { .. } | DimensionMismatch { .. }
    )
}
