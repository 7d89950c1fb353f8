use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] lastab_core::Error),
    /// A game, config or report document that does not parse or does not
    /// follow its schema. `context` names the document or field.
    #[error("{context}: {message}")]
    MalformedDocument { context: String, message: String },
    /// A missing or inconsistent experiment setting.
    #[error("{field}: {message}")]
    Config { field: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl Error {
    pub(crate) fn malformed(context: impl Into<String>, message: impl ToString) -> Self {
        Error::MalformedDocument {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl ToString) -> Self {
        Error::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of input validation, as opposed to failures while
    /// computing or writing results.
    pub fn is_validation(&self) -> bool {
        use lastab_core::Error as E;
        match self {
            Error::MalformedDocument { .. } | Error::Config { .. } => true,
            Error::Core(e) => !matches!(
                e,
                E::ExcessiveCensoring { .. } | E::NoConvergence { .. } | E::Singular
            ),
            Error::Io { .. } | Error::Pool(_) => false,
        }
    }
}
