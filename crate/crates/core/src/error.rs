use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema: {0}")]
    Schema(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("csv row {row}, column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("column `{0}` has zero variance and cannot be standardized")]
    ZeroVariance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("privacy budget unreachable: {0}")]
    BudgetUnreachable(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("activation cache is stale (recorded at parameter version {recorded}, network is at {current})")]
    StaleActivations { recorded: u64, current: u64 },

    #[error("design matrix is rank deficient at term `{0}`")]
    RankDeficient(String),

    #[error("degenerate null distribution: {0}")]
    DegenerateNull(String),

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("bench aborted: {failed} of {total} cells failed; first: {first}")]
    TooManyFailures { failed: usize, total: usize, first: String },

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
}

impl Error {
    /// Location line plus the parser's message, without the source excerpt.
    pub fn config(path: impl Into<PathBuf>, err: &toml::de::Error) -> Self {
        let text = err.to_string();
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let first = lines.next().unwrap_or_default().to_string();
        let message = match lines.next_back() {
            Some(last) if !last.starts_with('|') && !last.starts_with('^') => format!("{first}: {last}"),
            _ => first,
        };
        Error::Config {
            path: path.into(),
            message,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
