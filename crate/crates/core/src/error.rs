use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed bundle: {0}")]
    MalformedBundle(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("value out of range: {0}")]
    ValueOutOfRange(String),
    #[error("saliency map is identically zero")]
    ZeroSaliency,

    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),
    #[error("training samples cover a single class")]
    SingleClass,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("skeleton has {0} present joints, at least 3 are required")]
    TooFewJoints(usize),
    #[error("empty input")]
    EmptyInput,
    #[error("k = {k} exceeds the sample count {samples}")]
    KTooLarge { k: usize, samples: usize },

    #[error("corpus lists no bundles")]
    EmptyCorpus,
    #[error("image id {0:?} is already indexed")]
    DuplicateId(String),
    #[error("composition model has no rows")]
    EmptyModel,
    #[error("unknown image id {0:?}")]
    UnknownId(String),
    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("poses share no present joints")]
    NoSharedJoints,
    #[error("skeleton is missing its chain root (nose and neck)")]
    MissingRoot,
    #[error("no taken shots")]
    EmptyTaken,
    #[error("preferred pose set is empty")]
    EmptyPreferred,
    #[error("style session needs a non-empty style set and at least one candidate shot")]
    EmptySession,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
