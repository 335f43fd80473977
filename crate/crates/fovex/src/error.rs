//! Crate-wide error type.

use std::fmt;

/// Classifies failures of the external-predictor transport so callers can
/// react to each protocol violation distinctly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    /// The server did not produce a handshake line within the deadline.
    HandshakeTimeout,
    /// The server did not answer a request within the deadline.
    ResponseTimeout,
    /// A line could not be parsed, violated the message schema, or carried
    /// a mismatched request id.
    MalformedMessage,
    /// The `scores` array length differs from the advertised class count.
    ScoreLengthMismatch,
    /// The connection or subprocess went away mid-session.
    ConnectionLost,
    /// The server answered with an `error` message.
    RemoteError,
}

impl fmt::Display for TransportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TransportKind::HandshakeTimeout => "handshake timeout",
            TransportKind::ResponseTimeout => "response timeout",
            TransportKind::MalformedMessage => "malformed message",
            TransportKind::ScoreLengthMismatch => "score length mismatch",
            TransportKind::ConnectionLost => "connection lost",
            TransportKind::RemoteError => "remote error",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A gradient was requested from a predictor that does not provide one.
    #[error("capability: {0}")]
    Capability(String),

    /// The external predictor transport failed; `kind` says how.
    #[error("transport ({kind}): {message}")]
    Transport { kind: TransportKind, message: String },

    /// A metric has no defined value for the given inputs.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn transport(kind: TransportKind, msg: impl Into<String>) -> Self {
        Error::Transport { kind, message: msg.into() }
    }

    /// Transport kind, if this is a transport error.
    pub fn transport_kind(&self) -> Option<TransportKind> {
        match self {
            Error::Transport { kind, .. } => Some(*kind),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
