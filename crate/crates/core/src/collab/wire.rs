//! Line-oriented JSON records exchanged between agents, broker and analyzers.

use serde::{Deserialize, Serialize};

use crate::labeler::{RiskLevel, Verdict};
use crate::ml::ModelKind;

/// Longest accepted line, newline excluded.
pub const MAX_LINE: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Client,
    Analyzer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum WireMessage {
    Hello {
        role: Role,
        name: String,
    },
    Query {
        id: String,
        client: String,
        ip: String,
        timestamp: i64,
        query: String,
    },
    Verdict {
        id: String,
        level: RiskLevel,
        verdict: Verdict,
        model: ModelKind,
        confidence: f64,
        ip: String,
    },
    Block {
        ip: String,
        issued_at: i64,
        reason: String,
    },
    Error {
        code: String,
        message: String,
    },
}

/// Error codes carried by [`WireMessage::Error`].
pub mod codes {
    pub const BAD_MESSAGE: &str = "bad-message";
    pub const TOO_LONG: &str = "too-long";
    pub const BAD_ROLE: &str = "bad-role";
    pub const UNKNOWN_QUERY: &str = "unknown-query";
}

impl WireMessage {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        WireMessage::Error {
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            WireMessage::Hello { .. } => "hello",
            WireMessage::Query { .. } => "query",
            WireMessage::Verdict { .. } => "verdict",
            WireMessage::Block { .. } => "block",
            WireMessage::Error { .. } => "error",
        }
    }

    /// One JSON object, no trailing newline.
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }

    pub fn decode(line: &str) -> Result<Self, String> {
        if line.len() > MAX_LINE {
            return Err(format!("line of {} bytes exceeds {MAX_LINE}", line.len()));
        }
        let msg: WireMessage = serde_json::from_str(line).map_err(|e| e.to_string())?;
        msg.validate()?;
        Ok(msg)
    }

    /// Field-level checks that serde cannot express.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            WireMessage::Verdict { confidence, .. } if !(0.0..=1.0).contains(confidence) => {
                Err(format!("confidence {confidence} outside [0, 1]"))
            }
            WireMessage::Query { id, .. } | WireMessage::Verdict { id, .. } if id.is_empty() => {
                Err("empty query id".into())
            }
            _ => Ok(()),
        }
    }
}
