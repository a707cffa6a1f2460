use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{table}: missing required column `{column}`")]
    MissingColumn { table: String, column: String },

    #[error("{table}: malformed row at line {line}: {reason}")]
    MalformedRow {
        table: String,
        line: u64,
        reason: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("config file {path}: line {line}: {reason}")]
    ConfigLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("missing artifact: expected {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn { .. } => "missing_column",
            Error::MalformedRow { .. } => "malformed_row",
            Error::Data(_) => "data",
            Error::Config(_) | Error::ConfigLine { .. } => "config",
            Error::Dimension { .. } => "dimension",
            Error::Input(_) => "input",
            Error::Training(_) => "training",
            Error::MissingArtifact(_) => "missing_artifact",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
