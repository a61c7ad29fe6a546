use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("vocabulary too small: need {needed} distinct tokens, have {available}")]
    VocabTooSmall { needed: usize, available: usize },

    #[error("cannot sample {requested} pairs, only {available} available")]
    SampleExhausted { requested: u64, available: u64 },

    #[error("EMPTY_TEXT: utterance produced no tokens ({0})")]
    EmptyText(String),

    #[error("DEGENERATE_EMBEDDING: zero-norm embedding ({0})")]
    DegenerateEmbedding(String),

    #[error("SINGLE_CLASS: training data contains only one label")]
    SingleClass,

    #[error("training loss became NaN at epoch {epoch}, step {step}")]
    NanLoss { epoch: usize, step: usize },

    #[error("DEGENERATE_FEATURE: cosine feature has zero variance")]
    DegenerateFeature,

    #[error("ESTIMATOR_UNDEFINED: random pool is empty but its importance weight is positive")]
    EstimatorUndefined,

    #[error("recall {requested} unreachable, curve maximum is {max}")]
    RecallUnreachable { requested: f64, max: f64 },

    #[error("missing reference counts: {0}")]
    MissingReference(String),

    #[error("corpus mismatch: {0}")]
    CorpusMismatch(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;
