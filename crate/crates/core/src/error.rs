use alloc::string::String;

use crate::id::ParticleId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("particle {0} not found")]
    NotFound(ParticleId),
    #[error("strand {0} not found")]
    StrandNotFound(u64),
    #[error("id {0} already present")]
    DuplicateId(ParticleId),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("clock regression: now {now} is earlier than {last}")]
    ClockRegression { now: i64, last: i64 },
    #[error("text contains no alphanumeric token")]
    EmptyTokenStream,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero-length vector")]
    ZeroVector,
    #[error("index is empty")]
    EmptyIndex,
    #[error("embedder tag mismatch: index holds {expected:?}, got {got:?}")]
    EmbedderMismatch { expected: String, got: String },
    #[error("inverted range: lo {lo} > hi {hi}")]
    InvertedRange { lo: i64, hi: i64 },
    #[error("stale old value for {0}")]
    StaleOldValue(ParticleId),
    #[error("strand endpoints must differ")]
    SelfLoop,
    #[error("derivedFrom target {0} is not an insight aggregate")]
    DerivedFromTargetNotIa(ParticleId),
    #[error("particle {0} is not an insight aggregate")]
    NotAnIa(ParticleId),
    #[error("evidence out of range: {0}")]
    EvidenceOutOfRange(&'static str),
    #[error("negative duration")]
    NegativeDuration,
    #[error("too few constituents: need {need}, got {got}")]
    TooFewConstituents { need: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("oracle: {0}")]
    Oracle(String),
    #[error("invalid query: {0}")]
    InvalidQuery(&'static str),
    #[error("invalid config: {0}")]
    Config(String),
}
