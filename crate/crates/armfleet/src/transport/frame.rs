//! Length-prefixed message framing with a CRC-32 payload check.
//!
//! Layout: 4-byte magic, 1-byte message type, u32 little-endian payload
//! length, payload bytes, u32 little-endian CRC-32 of the payload.

use super::message::Message;
use super::TransportError;

pub const FRAME_MAGIC: [u8; 4] = *b"RGW1";
/// Magic, type byte, and payload length.
pub const FRAME_HEADER_LEN: usize = 9;
/// Trailing CRC-32.
pub const FRAME_TRAILER_LEN: usize = 4;
pub const MAX_PAYLOAD_LEN: u64 = 1 << 31;

/// Once a decoded prefix survives this many bytes, the buffer is compacted.
const COMPACT_THRESHOLD: usize = 1 << 16;

pub fn encode_frame(msg: &Message) -> Vec<u8> {
    let payload = msg.encode_payload();
    assert!(
        payload.len() as u64 <= MAX_PAYLOAD_LEN,
        "payload of {} bytes exceeds the frame cap",
        payload.len()
    );
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + payload.len() + FRAME_TRAILER_LEN);
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(msg.type_byte());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

/// Decodes one frame from the front of `bytes`; returns the message and the
/// number of bytes consumed. `Truncated` means more bytes are needed; every
/// other error is a corrupt or malformed frame.
pub fn decode_frame(bytes: &[u8]) -> Result<(Message, usize), TransportError> {
    if bytes.len() >= 4 {
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != FRAME_MAGIC {
            return Err(TransportError::BadMagic { found: magic });
        }
    }
    if bytes.len() >= 5 && !Message::is_known_type(bytes[4]) {
        return Err(TransportError::BadMsgType(bytes[4]));
    }
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(TransportError::Truncated {
            have: bytes.len(),
            need: FRAME_HEADER_LEN,
        });
    }
    let payload_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
    if payload_len as u64 > MAX_PAYLOAD_LEN {
        return Err(TransportError::Oversize {
            len: payload_len as u64,
        });
    }
    let need = FRAME_HEADER_LEN + payload_len as usize + FRAME_TRAILER_LEN;
    if bytes.len() < need {
        return Err(TransportError::Truncated {
            have: bytes.len(),
            need,
        });
    }
    let payload = &bytes[FRAME_HEADER_LEN..FRAME_HEADER_LEN + payload_len as usize];
    let found = u32::from_le_bytes(bytes[need - FRAME_TRAILER_LEN..need].try_into().unwrap());
    let expected = crc32fast::hash(payload);
    if found != expected {
        return Err(TransportError::BadChecksum { expected, found });
    }
    let msg = Message::decode_payload(bytes[4], payload)?;
    Ok((msg, need))
}

/// Incremental decoder over an arbitrarily chunked byte stream. Any error is
/// fatal for the stream; the protocol drops the connection instead of
/// resynchronizing.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    start: usize,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len() - self.start
    }

    /// Next complete message, or None until more bytes arrive.
    pub fn try_next(&mut self) -> Result<Option<Message>, TransportError> {
        match decode_frame(&self.buf[self.start..]) {
            Ok((msg, consumed)) => {
                self.start += consumed;
                if self.start == self.buf.len() {
                    self.buf.clear();
                    self.start = 0;
                } else if self.start > COMPACT_THRESHOLD {
                    self.buf.drain(..self.start);
                    self.start = 0;
                }
                Ok(Some(msg))
            }
            Err(TransportError::Truncated { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}
