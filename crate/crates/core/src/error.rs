use thiserror::Error;

use crate::data_model::MonthId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no weight row available for level `{level}` at origin {origin} (publication lag {lag})")]
    NoWeightsAvailable {
        level: String,
        origin: MonthId,
        lag: usize,
    },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("rank-deficient design; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("zero base value at index {index} for percentage-change transform")]
    ZeroBase { index: usize },

    #[error("requested {requested} factors but at most {max} are identifiable")]
    TooManyFactors { requested: usize, max: usize },

    #[error("feature width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("missing components for aggregation: {}", .0.join(", "))]
    MissingComponents(Vec<String>),

    #[error("missing horizons for accumulation: {0:?}")]
    MissingHorizons(Vec<usize>),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("unknown {kind} `{id}`")]
    Unknown { kind: &'static str, id: String },

    #[error("model unavailable: {0}")]
    Unavailable(String),

    #[error("duplicate forecast key {0}")]
    DuplicateKey(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
