use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    /// A record in an event file could not be decoded.
    #[error("malformed event record at byte {offset}: {reason}")]
    MalformedRecord { offset: u64, reason: String },

    /// Event timestamps went backwards.
    #[error("unordered stream: timestamp {timestamp} at record {record} follows {previous}")]
    Unordered {
        record: u64,
        timestamp: u64,
        previous: u64,
    },

    #[error("event ({x}, {y}) at t={t} is outside the {width}x{height} sensor")]
    OutOfBounds {
        x: u32,
        y: u32,
        t: u64,
        width: u32,
        height: u32,
    },

    #[error("annotation line {line}: {reason}")]
    Annotation { line: u64, reason: String },

    #[error("detection line {line}: {reason}")]
    DetectionRecord { line: u64, reason: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("cluster {0} is inactive")]
    InactiveCluster(u32),
}

impl Error {
    /// True for errors caused by the content of an event stream rather than
    /// the environment.
    pub fn is_stream_error(&self) -> bool {
        matches!(
            self,
            Error::MalformedRecord { .. } | Error::Unordered { .. } | Error::OutOfBounds { .. }
        )
    }
}
