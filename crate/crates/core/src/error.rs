use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("screenplay contains no dialogue")]
    EmptyScreenplay,
    #[error("line {line}: {message}")]
    MalformedScript { line: usize, message: String },

    #[error("unknown violence label {0:?}")]
    UnknownLabel(String),
    #[error("duplicate movie_id {0:?}")]
    DuplicateMovie(String),
    #[error("duplicate demographic record for ({movie_id}, {character_id})")]
    DuplicateCharacter { movie_id: String, character_id: String },
    #[error("expected header {expected:?}, found {found:?}")]
    BadHeader { expected: String, found: String },
    #[error("record {record}: {message}")]
    BadRecord { record: usize, message: String },

    #[error("sentence ending at line {line} lacks `# movie_id` / `# utt_index` comments")]
    UnalignedSentence { line: usize },
    #[error("movie {movie_id:?} has no utterance {index}")]
    UnknownUtterance { movie_id: String, index: usize },
    #[error("CoNLL-U line {line}: {message}")]
    Conllu { line: usize, message: String },

    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),

    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("gold class index {0} is not one of LOW/MED/HIGH")]
    InvalidGold(usize),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("finite-difference epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),

    #[error("window size k must be even and at least 2, got {0}")]
    InvalidWindow(usize),
    #[error("{labeled} labeled movies cannot be split into {folds} folds")]
    TooFewMovies { labeled: usize, folds: usize },
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("role assignment requires a MED or HIGH violence level")]
    LowViolence,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate variance: {0}")]
    DegenerateVariance(&'static str),
    #[error("at least two groups are required, got {0}")]
    TooFewGroups(usize),
    #[error("count {x} exceeds total {n}")]
    CountExceedsTotal { x: u64, n: u64 },
    #[error("contingency table has a zero row or column total")]
    ZeroMarginal,
    #[error("degrees of freedom must be positive, got {0}")]
    NonPositiveDf(f64),
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("unsupported model format version {0:?}")]
    VersionMismatch(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("tensor {name}: expected {expected} values, found {found}")]
    TruncatedTensor { name: String, expected: usize, found: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            Error::Json(e) => e.is_io(),
            _ => false,
        }
    }
}
