use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
///
/// Variants fall into three families that the command-line front end maps to
/// distinct exit codes: usage problems, data problems and numerical failures
/// (see [`Error::kind`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("malformed metadata in {path}: {message}")]
    MalformedMeta { path: PathBuf, message: String },

    #[error("corrupt pack: {0}")]
    CorruptPack(String),

    #[error("empty pack: n must be at least 1")]
    EmptyPack,

    #[error("non-finite value in {field} at row {row}, column {col}")]
    NonFinite {
        field: &'static str,
        row: usize,
        col: usize,
    },

    #[error("duplicate sample id '{0}'")]
    DuplicateId(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("image codec error on {path}: {message}")]
    Codec { path: PathBuf, message: String },

    #[error("augmentation spec parse error: {0}")]
    SpecParse(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{0}")]
    Usage(String),

    #[error("mismatch between score files: {0}")]
    ScoreMismatch(String),

    #[error("singular covariance: {0}")]
    Singular(String),

    #[error("rank-deficient features: {0}")]
    RankDeficient(String),

    #[error("ViM alpha must be positive, got {0} (mean max logit over the train pack is not positive)")]
    NonPositiveAlpha(f64),

    #[error("degenerate scores: target unattainable with strict inequality ({0})")]
    DegenerateScores(String),
}

/// Coarse classification of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Usage(_) | Error::SpecParse(_) | Error::InvalidParameter(_) => ErrorKind::Usage,
            Error::Singular(_)
            | Error::RankDeficient(_)
            | Error::NonPositiveAlpha(_)
            | Error::DegenerateScores(_) => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub fn meta(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::MalformedMeta {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
