use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // corpus_text
    #[error("lexicon contains no entries")]
    EmptyLexicon,
    #[error("invalid weight on lexicon line {0}")]
    InvalidWeight(usize),
    #[error("duplicate lexicon phrase `{0}`")]
    DuplicatePhrase(String),
    #[error("corpus is empty")]
    EmptyCorpus,

    // capability
    #[error("entropy weighting needs at least two firms, got {0}")]
    InsufficientFirms(usize),
    #[error("duplicate firm `{0}` in one scoring year")]
    DuplicateFirm(String),
    #[error("invalid capability record for `{firm}` ({year}): {reason}")]
    InvalidRecord { firm: String, year: i32, reason: String },

    // washing_index
    #[error("zero within-year standard deviation in {0}")]
    DegenerateYear(i32),
    #[error("series keys do not line up; missing: {0:?}")]
    SeriesMisaligned(Vec<String>),
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    // glm_core
    #[error("design matrix: {0}")]
    InvalidDesign(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("outcome has a single class")]
    DegenerateOutcome,
    #[error("perfect separation detected")]
    PerfectSeparation,
    #[error("information matrix is singular")]
    SingularHessian,
    #[error("ordinal level {0} is not observed")]
    SparseLevel(usize),
    #[error("invalid outcome: {0}")]
    InvalidOutcome(String),
    #[error("columns of the design do not match the fit: {0}")]
    ColumnMismatch(String),

    // mediation / moderation / iv
    #[error("singular design involving columns {0:?}")]
    SingularDesign(Vec<String>),
    #[error("every bootstrap replicate failed")]
    BootstrapCollapse,
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("fit has no interaction term")]
    NotAModerationFit,
    #[error("group `{0}` is too small to fit")]
    GroupTooSmall(String),
    #[error("excluded instruments carry no information about the endogenous regressor")]
    NoIdentification,

    // policy_sim / tables
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    // datagen
    #[error("calibration failure: {0}")]
    CalibrationFailure(String),

    #[error("io: {0}")]
    Io(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
