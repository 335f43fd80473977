//! Wire format for external predictors: newline-delimited JSON, UTF-8, one
//! message per line.
//!
//! The server speaks first with `hello`, declaring its name, class count,
//! input shape, and gradient capability. The client then sends `forward`
//! requests and receives `scores` or `error` replies; `id` must echo.
//! Image and gradient payloads travel as base64 of little-endian 32-bit
//! floats, row-major `H·W·C`. Unknown fields are ignored; any other
//! violation aborts the session.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TransportKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

/// Messages the server emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Hello {
        name: String,
        num_classes: usize,
        input: InputShape,
        supports_gradient: bool,
    },
    Scores {
        id: u64,
        scores: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gradient_f32_b64: Option<String>,
    },
    Error { id: u64, message: String },
}

/// Messages the client emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Forward {
        id: u64,
        image_f32_b64: String,
        target: Option<u64>,
        want_gradient: bool,
    },
}

/// Serializes a message as a single JSON line (no trailing newline).
pub fn to_line<T: Serialize>(message: &T) -> Result<String> {
    serde_json::to_string(message)
        .map_err(|e| Error::transport(TransportKind::MalformedMessage, e.to_string()))
}

pub fn parse_server_line(line: &str) -> Result<ServerMessage> {
    serde_json::from_str(line).map_err(|e| {
        Error::transport(
            TransportKind::MalformedMessage,
            format!("bad server message {line:?}: {e}"),
        )
    })
}

pub fn parse_client_line(line: &str) -> Result<ClientMessage> {
    serde_json::from_str(line).map_err(|e| {
        Error::transport(
            TransportKind::MalformedMessage,
            format!("bad client message {line:?}: {e}"),
        )
    })
}

/// Base64 of the values narrowed to little-endian f32.
pub fn encode_f32_b64(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    B64.encode(bytes)
}

/// Inverse of [`encode_f32_b64`], widening back to f64.
pub fn decode_f32_b64(payload: &str) -> Result<Vec<f64>> {
    let bytes = B64.decode(payload).map_err(|e| {
        Error::transport(TransportKind::MalformedMessage, format!("bad base64 payload: {e}"))
    })?;
    if bytes.len() % 4 != 0 {
        return Err(Error::transport(
            TransportKind::MalformedMessage,
            format!("payload length {} is not a multiple of 4", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}
