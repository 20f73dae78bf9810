//! Wire framing.
//!
//! ```text
//! magic[4]="CAL1" | version[1] | msg_type[1] | flags[1] | reserved[1]=0
//! | correlation_id[8] BE | payload_len[4] BE | payload | crc32[4] BE
//! ```
//!
//! The CRC covers version through payload. With FEC enabled everything
//! after the magic is cut into `data_len`-byte blocks (the last one
//! zero-padded) and each block is followed by `parity_len` Reed-Solomon
//! parity bytes. The magic is never coded; it is the sync pattern.

use thiserror::Error;

use super::crc::{crc32, Crc32};
use super::packet::{CallosumPacket, MsgType, MAX_PAYLOAD, PROTOCOL_VERSION};
use super::rs::ReedSolomon;

pub const MAGIC: [u8; 4] = *b"CAL1";
pub const HEADER_LEN: usize = 16;
pub const CRC_LEN: usize = 4;
pub const FLAG_FEC: u8 = 0x01;

/// Mismatching magic bytes still accepted as a sync candidate when FEC is
/// on. Such candidates are only reported if they decode.
const FEC_SYNC_TOLERANCE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FecConfig {
    pub enabled: bool,
    pub data_len: usize,
    pub parity_len: usize,
}

impl Default for FecConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            data_len: 223,
            parity_len: 32,
        }
    }
}

impl FecConfig {
    /// RS(255,223) switched on.
    pub fn rs255_223() -> Self {
        Self {
            enabled: true,
            ..Self::default()
        }
    }

    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn codeword_len(&self) -> usize {
        self.data_len + self.parity_len
    }

    pub fn validate(&self) -> Result<(), EncodeError> {
        if self.data_len >= 1 && self.parity_len >= 2 && self.data_len + self.parity_len <= 255 {
            Ok(())
        } else {
            Err(EncodeError::InvalidFec(*self))
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds the 1 MiB limit")]
    PayloadTooLarge(usize),
    #[error("invalid FEC parameters {0:?}")]
    InvalidFec(FecConfig),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame CRC mismatch")]
    CrcMismatch,
    #[error("FEC block could not be corrected")]
    FecDecodeFailure,
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unknown message type 0x{0:02x}")]
    UnknownMsgType(u8),
    #[error("declared payload length {0} exceeds the limit")]
    BadLength(u32),
    #[error("stream ended inside a frame")]
    Truncated,
}

fn body_bytes(packet: &CallosumPacket, fec: &FecConfig) -> Vec<u8> {
    let mut body = Vec::with_capacity(HEADER_LEN + packet.payload.len() + CRC_LEN);
    body.push(packet.version);
    body.push(packet.msg_type.code());
    body.push(if fec.enabled { FLAG_FEC } else { 0 });
    body.push(0);
    body.extend_from_slice(&packet.correlation_id.to_be_bytes());
    body.extend_from_slice(&(packet.payload.len() as u32).to_be_bytes());
    body.extend_from_slice(&packet.payload);
    let crc = crc32(&body);
    body.extend_from_slice(&crc.to_be_bytes());
    body
}

pub fn encode_frame(packet: &CallosumPacket, fec: &FecConfig) -> Result<Vec<u8>, EncodeError> {
    if packet.payload.len() > MAX_PAYLOAD {
        return Err(EncodeError::PayloadTooLarge(packet.payload.len()));
    }
    let body = body_bytes(packet, fec);
    let mut out = Vec::with_capacity(MAGIC.len() + body.len() * 2);
    out.extend_from_slice(&MAGIC);
    if !fec.enabled {
        out.extend_from_slice(&body);
        return Ok(out);
    }
    fec.validate()?;
    let rs = ReedSolomon::gf256(fec.parity_len).map_err(|_| EncodeError::InvalidFec(*fec))?;
    let mut block = vec![0u8; fec.data_len];
    for chunk in body.chunks(fec.data_len) {
        block[..chunk.len()].copy_from_slice(chunk);
        block[chunk.len()..].fill(0);
        out.extend_from_slice(&block);
        out.extend(rs.parity(&block).expect("block fits codeword"));
    }
    Ok(out)
}

/// Decode every frame found in `stream`, in order. Bytes outside frames
/// are skipped. After a bad frame the scan resumes one byte past its magic.
pub fn decode_stream(stream: &[u8], fec: &FecConfig) -> Vec<Result<CallosumPacket, FrameError>> {
    let rs = if fec.enabled {
        if fec.validate().is_err() {
            return vec![Err(FrameError::FecDecodeFailure)];
        }
        ReedSolomon::gf256(fec.parity_len).ok()
    } else {
        None
    };
    let tolerance = if rs.is_some() { FEC_SYNC_TOLERANCE } else { 0 };
    let mut out = Vec::new();
    let mut pos = 0;
    while let Some((start, exact)) = find_sync(stream, pos, tolerance) {
        let body = &stream[start + MAGIC.len()..];
        let result = match &rs {
            None => decode_plain(body),
            Some(rs) => decode_fec(body, fec, rs),
        };
        match result {
            Ok((packet, used)) => {
                out.push(Ok(packet));
                pos = start + MAGIC.len() + used;
            }
            Err(e) => {
                if exact {
                    out.push(Err(e));
                }
                pos = start + 1;
            }
        }
    }
    out
}

fn find_sync(stream: &[u8], from: usize, tolerance: usize) -> Option<(usize, bool)> {
    if stream.len() < MAGIC.len() {
        return None;
    }
    (from..=stream.len() - MAGIC.len()).find_map(|i| {
        let window = &stream[i..i + MAGIC.len()];
        let mismatches = window.iter().zip(MAGIC).filter(|(a, b)| **a != *b).count();
        (mismatches <= tolerance).then_some((i, mismatches == 0))
    })
}

fn check_body(body: &[u8]) -> Result<CallosumPacket, FrameError> {
    let (content, crc_bytes) = body.split_at(body.len() - CRC_LEN);
    let expected = u32::from_be_bytes(crc_bytes.try_into().expect("4 bytes"));
    let mut crc = Crc32::new();
    crc.update(content);
    if crc.finish() != expected {
        return Err(FrameError::CrcMismatch);
    }
    if content[0] != PROTOCOL_VERSION {
        return Err(FrameError::BadVersion(content[0]));
    }
    let msg_type = MsgType::from_code(content[1]).ok_or(FrameError::UnknownMsgType(content[1]))?;
    let correlation_id = u64::from_be_bytes(content[4..12].try_into().expect("8 bytes"));
    Ok(CallosumPacket {
        version: content[0],
        msg_type,
        correlation_id,
        payload: content[HEADER_LEN..].to_vec(),
    })
}

fn declared_len(header: &[u8]) -> Result<usize, FrameError> {
    let len = u32::from_be_bytes(header[12..16].try_into().expect("4 bytes"));
    if len as usize > MAX_PAYLOAD {
        return Err(FrameError::BadLength(len));
    }
    Ok(len as usize)
}

fn decode_plain(body: &[u8]) -> Result<(CallosumPacket, usize), FrameError> {
    if body.len() < HEADER_LEN {
        return Err(FrameError::Truncated);
    }
    let total = HEADER_LEN + declared_len(body)? + CRC_LEN;
    if body.len() < total {
        return Err(FrameError::Truncated);
    }
    Ok((check_body(&body[..total])?, total))
}

fn decode_fec(
    coded: &[u8],
    fec: &FecConfig,
    rs: &ReedSolomon,
) -> Result<(CallosumPacket, usize), FrameError> {
    let n = fec.codeword_len();
    let mut data = Vec::new();
    let mut used = 0;
    let mut needed = HEADER_LEN;
    let mut header_seen = false;
    let mut codeword = vec![0u8; n];
    while data.len() < needed {
        if coded.len() < used + n {
            return Err(FrameError::Truncated);
        }
        codeword.copy_from_slice(&coded[used..used + n]);
        rs.correct_in_place(&mut codeword)
            .map_err(|_| FrameError::FecDecodeFailure)?;
        data.extend_from_slice(&codeword[..fec.data_len]);
        used += n;
        if !header_seen && data.len() >= HEADER_LEN {
            header_seen = true;
            needed = HEADER_LEN + declared_len(&data)? + CRC_LEN;
        }
    }
    Ok((check_body(&data[..needed])?, used))
}
