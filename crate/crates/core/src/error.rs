use std::path::PathBuf;

use thiserror::Error;

use crate::glyph::GlyphCode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: byte offset {offset}: {msg}")]
    Binary { path: PathBuf, offset: u64, msg: String },

    #[error("invalid embedding table: {0}")]
    InvalidTable(String),

    #[error("character {0:?} is not in the embedding table")]
    UnknownChar(char),

    #[error("similarity is undefined for a zero vector")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("{0}")]
    Range(String),

    #[error("node {0} is the root and has no parent")]
    NoParent(usize),

    #[error("node {0} does not exist")]
    UnknownNode(usize),

    #[error("corpus is empty after dropping out-of-vocabulary characters")]
    EmptyCorpus,

    #[error("observation is empty after dropping out-of-vocabulary characters")]
    EmptyObservation,

    #[error("provider error: {0}")]
    Provider(String),

    #[error("character {0:?} already has an AIN entry")]
    DuplicateChar(char),

    #[error("glyph {0} is already assigned")]
    DuplicateGlyph(GlyphCode),

    #[error("lexicon is full ({0} entries)")]
    LexiconFull(usize),

    #[error("glyph grid is full")]
    GridFull,

    #[error("degenerate table: covariance rank is below 3")]
    Degenerate,

    #[error("invalid atlas: {0}")]
    InvalidAtlas(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("transcript verification failed at line {line}: {msg}")]
    Verify { line: usize, msg: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
