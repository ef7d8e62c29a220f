//! Length-prefixed binary envelope.
//!
//! ```text
//! u32 BE  total frame length, including these four bytes
//! u8      message kind
//! u64 BE  sequence
//! u64 BE  timestamp, µs
//! u32 BE  topic length, then UTF-8 topic
//! ...     payload
//! ```

use std::io::Read;

use serde::{Deserialize, Serialize};

use super::BusError;

pub const MAX_PAYLOAD: usize = 16 * 1024 * 1024;
pub const MAX_TOPIC: usize = 255;
/// Length, kind, sequence and timestamp.
pub const FIXED_HEADER: usize = 4 + 1 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Publish = 0,
    Request = 1,
    Reply = 2,
    Error = 3,
}

impl TryFrom<u8> for MessageKind {
    type Error = BusError;

    fn try_from(v: u8) -> Result<Self, BusError> {
        Ok(match v {
            0 => MessageKind::Publish,
            1 => MessageKind::Request,
            2 => MessageKind::Reply,
            3 => MessageKind::Error,
            other => return Err(BusError::Malformed(format!("unknown message kind {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub topic: String,
    pub kind: MessageKind,
    pub seq: u64,
    pub timestamp_us: u64,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn publish(topic: &str, seq: u64, timestamp_us: u64, payload: Vec<u8>) -> Self {
        Self {
            topic: topic.to_string(),
            kind: MessageKind::Publish,
            seq,
            timestamp_us,
            payload,
        }
    }

    pub fn frame_len(&self) -> usize {
        FIXED_HEADER + 4 + self.topic.len() + self.payload.len()
    }
}

pub fn encode(env: &Envelope) -> Result<Vec<u8>, BusError> {
    if env.payload.len() > MAX_PAYLOAD {
        return Err(BusError::Oversize(env.payload.len()));
    }
    if env.topic.len() > MAX_TOPIC {
        return Err(BusError::Malformed("topic too long".into()));
    }
    let len = env.frame_len();
    let mut out = Vec::with_capacity(len);
    out.extend_from_slice(&(len as u32).to_be_bytes());
    out.push(env.kind as u8);
    out.extend_from_slice(&env.seq.to_be_bytes());
    out.extend_from_slice(&env.timestamp_us.to_be_bytes());
    out.extend_from_slice(&(env.topic.len() as u32).to_be_bytes());
    out.extend_from_slice(env.topic.as_bytes());
    out.extend_from_slice(&env.payload);
    Ok(out)
}

/// Decodes one frame from the front of `bytes`, returning it and the number
/// of bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(Envelope, usize), BusError> {
    if bytes.len() < 4 {
        return Err(BusError::Incomplete);
    }
    let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
    if len < FIXED_HEADER + 4 {
        return Err(BusError::Malformed(format!("frame length {len} below header size")));
    }
    if len > FIXED_HEADER + 4 + MAX_TOPIC + MAX_PAYLOAD {
        return Err(BusError::Oversize(len));
    }
    if bytes.len() < len {
        return Err(BusError::Incomplete);
    }
    let f = &bytes[..len];
    let kind = MessageKind::try_from(f[4])?;
    let seq = u64::from_be_bytes(f[5..13].try_into().unwrap());
    let timestamp_us = u64::from_be_bytes(f[13..21].try_into().unwrap());
    let tlen = u32::from_be_bytes(f[21..25].try_into().unwrap()) as usize;
    if tlen > MAX_TOPIC || 25 + tlen > len {
        return Err(BusError::Malformed("topic length exceeds frame".into()));
    }
    let topic = std::str::from_utf8(&f[25..25 + tlen])
        .map_err(|_| BusError::Malformed("topic is not UTF-8".into()))?
        .to_string();
    Ok((
        Envelope {
            topic,
            kind,
            seq,
            timestamp_us,
            payload: f[25 + tlen..].to_vec(),
        },
        len,
    ))
}

/// Decodes exactly one frame; trailing bytes are an error.
pub fn decode(bytes: &[u8]) -> Result<Envelope, BusError> {
    let (env, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(BusError::Malformed("trailing bytes after frame".into()));
    }
    Ok(env)
}

/// Reads one frame from a stream. `Ok(None)` on clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Envelope>, BusError> {
    let mut head = [0u8; 4];
    match r.read_exact(&mut head) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(head) as usize;
    if len < FIXED_HEADER + 4 || len > FIXED_HEADER + 4 + MAX_TOPIC + MAX_PAYLOAD {
        return Err(BusError::Malformed(format!("bad frame length {len}")));
    }
    let mut buf = vec![0u8; len];
    buf[..4].copy_from_slice(&head);
    r.read_exact(&mut buf[4..]).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => BusError::Incomplete,
        _ => e.into(),
    })?;
    decode(&buf).map(Some)
}

/// Splits a concatenation of frames.
pub fn decode_all(mut bytes: &[u8]) -> Result<Vec<Envelope>, BusError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (env, used) = decode_prefix(bytes)?;
        out.push(env);
        bytes = &bytes[used..];
    }
    Ok(out)
}
