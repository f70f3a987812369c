use std::path::PathBuf;

use crate::domain::StudentId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing score for student {student} at epoch {epoch}")]
    MissingScore { student: StudentId, epoch: usize },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("unknown student id(s): {}", format_ids(.0))]
    UnknownStudents(Vec<StudentId>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate metric: {0}")]
    Degenerate(String),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("epoch {epoch} failed: {source}")]
    EpochFailed {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::UnknownStudents(_)
                | Error::Config(_)
                | Error::Parse { .. }
                | Error::MissingScore { .. }
        )
    }
}

fn format_ids(ids: &[StudentId]) -> String {
    ids.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(", ")
}
