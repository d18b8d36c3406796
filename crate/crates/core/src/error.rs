use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("duplicate image id {0:?}")]
    DuplicateImage(String),
    #[error("target {0:?} has no foreground keyword")]
    MissingForeground(String),
    #[error("unknown image id {0:?}")]
    UnknownImage(String),
    #[error("unknown keyword {0}")]
    UnknownKeyword(String),
    #[error("corpus has {0} keywords; the brute-force oracle accepts at most 20")]
    OracleTooLarge(usize),
    #[error("no candidates to sample from")]
    EmptyCandidates,
    #[error("duplicate manifest pair ({target}, {background})")]
    DuplicatePair { target: String, background: String },
    #[error("background {background:?} contains the foreground keyword of target {target:?}")]
    ForegroundConflict { target: String, background: String },
    #[error("missing measurement for model {model_id:?}, test {test_id:?}, position {position:?}")]
    MissingMeasurement {
        model_id: String,
        test_id: String,
        position: String,
    },
    #[error("duplicate measurement for model {model_id:?}, test {test_id:?}, position {position:?}")]
    DuplicateMeasurement {
        model_id: String,
        test_id: String,
        position: String,
    },
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("{0}")]
    Data(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
