use std::io;

use thiserror::Error;

/// Errors produced by sketching, clustering, container I/O and the attack suite.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid key: {0}")]
    InvalidKey(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("measure {measure} is not defined for {payload} payloads")]
    IncompatibleMeasure {
        measure: &'static str,
        payload: &'static str,
    },

    #[error("malformed {format} data: {reason}")]
    Malformed {
        format: &'static str,
        reason: String,
    },

    #[error("inconsistent dataset: {0}")]
    Dataset(String),

    #[error("record index {0} is not covered by the permutation set")]
    UncoveredIndex(u32),

    #[error("partitions cover different record sets")]
    RecordSetMismatch,

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn malformed(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Malformed {
            format,
            reason: reason.into(),
        }
    }

    pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::LengthMismatch { expected, actual })
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
