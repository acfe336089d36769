use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// A line of a line-delimited input file could not be accepted.
    #[error("{reason} at line {line}")]
    Record { line: usize, reason: String },

    #[error("invalid cui: {0:?}")]
    InvalidCui(String),

    #[error("invalid qid: {0:?}")]
    InvalidQid(String),

    #[error("unsupported language tag: {0:?}")]
    InvalidLang(String),

    #[error("alias text is empty after normalization")]
    BlankAlias,

    #[error("alias list is empty")]
    EmptyAliases,

    #[error("duplicate cui {0}")]
    DuplicateCui(String),

    #[error("duplicate qid {0}")]
    DuplicateQid(String),

    #[error("title {0:?} is not among the entity aliases")]
    TitleNotInAliases(String),

    #[error("empty collection")]
    EmptyCollection,

    #[error("empty alignment")]
    EmptyAlignment,

    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index file: {0}")]
    IndexFormat(String),

    #[error("unknown qid {0}")]
    UnknownQid(String),

    #[error("group lacks positive (cui {0})")]
    GroupLacksPositive(String),

    #[error("group for cui {0} has more than one positive")]
    MultiplePositives(String),

    #[error("duplicate pair_id {0}")]
    DuplicatePairId(String),

    #[error("score out of range for pair {pair_id}: {score}")]
    ScoreOutOfRange { pair_id: String, score: f64 },

    #[error("missing score for pair {pair_id} (qid {qid})")]
    MissingScore { pair_id: String, qid: String },

    #[error("pairs do not cover candidate list for cui {cui}: {detail}")]
    PairMismatch { cui: String, detail: String },

    #[error("run has zero queries")]
    NoQueries,

    #[error("no retrievable gold")]
    NoRetrievableGold,

    #[error("invalid run: {0}")]
    InvalidRun(String),
}

impl Error {
    pub(crate) fn record(line: usize, reason: impl Into<String>) -> Self {
        Error::Record {
            line,
            reason: reason.into(),
        }
    }
}
