use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {rejected} of {total} rows rejected (limit 10%), first: {first}")]
    TooManyRejects {
        path: PathBuf,
        rejected: usize,
        total: usize,
        first: String,
    },

    #[error("duplicate bar date {0}")]
    DuplicateDate(chrono::NaiveDate),

    #[error("bar {date} fails OHLC sanity: {reason}")]
    BarSanity {
        date: chrono::NaiveDate,
        reason: String,
    },

    #[error("empty window {start}..{end}: {tweets} tweets, {bars} bars")]
    EmptyWindow {
        start: chrono::NaiveDate,
        end: chrono::NaiveDate,
        tweets: usize,
        bars: usize,
    },

    #[error("tweet at {got} precedes ledger frontier {frontier}")]
    LedgerOrder {
        got: chrono::DateTime<chrono::Utc>,
        frontier: chrono::DateTime<chrono::Utc>,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {layer}")]
    NonFinite { layer: String },

    #[error("training diverged at epoch {epoch} (seed {seed})")]
    Diverged { epoch: usize, seed: u64 },

    #[error("input was not scaled with this model's scaler")]
    ScalerMismatch,

    #[error("{0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
