//! Crate-wide error type and process exit-code mapping.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A corpus or artifact record failed schema validation.
    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    /// A precondition on numeric or structural input was violated.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("generation failed for {paper_id}#{ordinal}: {message}")]
    Generation {
        paper_id: String,
        ordinal: usize,
        message: String,
    },

    #[error("response parse error: {0}")]
    Response(String),

    #[error("classification failed for batch of {} phrases: {message}", batch.len())]
    Classification { batch: Vec<String>, message: String },

    #[error("missing upstream artifact {}; run the producing stage first", path.display())]
    Dependency { path: PathBuf },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Template(_) => 2,
            Error::Parse { .. }
            | Error::Data(_)
            | Error::Domain(_)
            | Error::Dependency { .. }
            | Error::Training(_) => 3,
            Error::Backend(_)
            | Error::Generation { .. }
            | Error::Response(_)
            | Error::Classification { .. } => 4,
            Error::Io { .. } => 1,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
