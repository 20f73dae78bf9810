use std::fmt;

use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u8 = 1;

/// Largest payload a single packet may carry (1 MiB).
pub const MAX_PAYLOAD: usize = 1_048_576;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MsgType {
    SenseForward,
    SealedEnvelopeMsg,
    KeyAnnounce,
    QueryRequest,
    QueryResponse,
    Heartbeat,
}

impl MsgType {
    pub const ALL: [MsgType; 6] = [
        MsgType::SenseForward,
        MsgType::SealedEnvelopeMsg,
        MsgType::KeyAnnounce,
        MsgType::QueryRequest,
        MsgType::QueryResponse,
        MsgType::Heartbeat,
    ];

    pub fn code(self) -> u8 {
        match self {
            MsgType::SenseForward => 0x01,
            MsgType::SealedEnvelopeMsg => 0x02,
            MsgType::KeyAnnounce => 0x03,
            MsgType::QueryRequest => 0x04,
            MsgType::QueryResponse => 0x05,
            MsgType::Heartbeat => 0x06,
        }
    }

    pub fn from_code(code: u8) -> Option<MsgType> {
        MsgType::ALL.into_iter().find(|t| t.code() == code)
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A typed message exchanged between the two nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallosumPacket {
    pub version: u8,
    pub msg_type: MsgType,
    pub correlation_id: u64,
    pub payload: Vec<u8>,
}

impl CallosumPacket {
    pub fn new(msg_type: MsgType, correlation_id: u64, payload: impl Into<Vec<u8>>) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            msg_type,
            correlation_id,
            payload: payload.into(),
        }
    }
}
