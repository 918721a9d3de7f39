use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("unknown value id {value} for feature {feature}")]
    UnknownFeatureValue { feature: usize, value: u32 },

    #[error("unknown ad variant {0}")]
    UnknownVariant(usize),

    #[error("invalid counts: {0}")]
    InvalidCounts(String),

    #[error("step ratio window has no non-clicks")]
    EmptyWindow,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty input")]
    EmptyInput,

    #[error("log out of order: timestamp {found} follows {previous}")]
    UnorderedLog { previous: u64, found: u64 },

    #[error("confidence must lie strictly between 0 and 1, got {0}")]
    InvalidConfidence(f64),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}
