use thiserror::Error;

/// Errors raised by the estimation pipeline.
///
/// Variants split into input problems (bad data, bad configuration, degenerate
/// statistics) and I/O failures; the CLI maps the former to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unlabeled item in ground-truth count")]
    UnlabeledItem,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("not a probability vector: {0}")]
    NotOnSimplex(String),
    #[error("empty class in training set")]
    EmptyClass,
    #[error("class {0} has fewer than {1} examples; stratified {1}-fold split impossible")]
    TooFewForFolds(usize, usize),
    #[error("class unseen in correction sample")]
    ClassUnseen(usize),
    #[error("uninformative classifier rates")]
    UninformativeRates,
    #[error("degenerate PMC denominator")]
    DegeneratePmc,
    #[error("rND is binary-only")]
    BinaryOnly,
    #[error("missing cutoff {0}")]
    MissingCutoff(usize),
    #[error("sample too small")]
    SampleTooSmall,
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            detail: detail.into(),
        }
    }

    /// True for failures caused by the caller's input rather than the
    /// environment.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Csv(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
