use std::path::PathBuf;

use thiserror::Error;

/// One problem found while reading or validating an experiment config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// Dotted path to the offending value, e.g. `training.lr`.
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("render error: {0}")]
    Render(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A computation produced or received a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("usage error: {0}")]
    Usage(String),

    /// Input is well formed but too degenerate for the statistic requested.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid config: {}", format_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("experiment `{context}` failed: {source}")]
    Experiment {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid user input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Domain(_) | Error::Config(_) | Error::Shape(_) | Error::Format(_) => true,
            Error::Experiment { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
