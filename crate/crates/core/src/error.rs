use std::path::PathBuf;

use crate::VenueId;

/// Errors raised by the venue engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no scans")]
    NoScans,
    #[error("no samples")]
    NoSamples,
    #[error("no color data")]
    NoColorData,
    #[error("no correct check-ins")]
    NoCorrectCheckIns,
    #[error("empty floorplan")]
    EmptyFloorplan,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("need at least {k} pixels for {k} clusters, got {got}")]
    TooFewPixels { k: usize, got: usize },
    #[error("sound vector has length {0}, expected 100")]
    SoundLength(usize),
    #[error("ranked lists cover different candidate sets")]
    CandidateMismatch,
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("venue not found: {0}")]
    NotFound(VenueId),
    #[error("unsupported schema version {found} in {what} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("parse error in {what} at line {line}, column {column}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(what: &'static str, err: &serde_json::Error) -> Self {
        Error::Parse {
            what,
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
