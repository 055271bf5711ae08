//! Frame layout:
//!
//! ```text
//! +------+--------+-----+-----+-----------------+---------+
//! | 0xFE | msg_id | len | seq | payload (len)   | crc16   |
//! +------+--------+-----+-----+-----------------+---------+
//!    1       1       1     1      0..=255           2 (LE)
//! ```
//!
//! The CRC (CCITT-FALSE) covers `msg_id` through the end of the payload.

use super::crc::crc16_ccitt_false;
use super::message::Message;
use super::ProtocolError;

pub const MAGIC: u8 = 0xFE;
pub const HEADER_LEN: usize = 4;
pub const FRAME_OVERHEAD: usize = HEADER_LEN + 2;

/// A decoded message with its frame sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub seq: u8,
    pub msg: Message,
}

pub fn encode(msg: &Message, seq: u8) -> Result<Vec<u8>, ProtocolError> {
    let payload = msg.payload()?;
    let mut out = Vec::with_capacity(FRAME_OVERHEAD + payload.len());
    out.extend_from_slice(&[MAGIC, msg.msg_id(), payload.len() as u8, seq]);
    out.extend_from_slice(&payload);
    let crc = crc16_ccitt_false(&out[1..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeStats {
    pub frames: u64,
    /// Bytes skipped while looking for a start byte.
    pub garbage_bytes: u64,
    pub crc_failures: u64,
    /// Frames with a valid CRC but an unknown id or wrong payload layout.
    pub malformed: u64,
}

/// Incremental, resynchronizing frame parser. Never panics; corruption is
/// counted in [`DecodeStats`].
#[derive(Debug, Default, Clone)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    stats: DecodeStats,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> DecodeStats {
        self.stats
    }

    /// Bytes held back waiting for the rest of a frame.
    pub fn residual(&self) -> &[u8] {
        &self.buf
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<Decoded> {
        let mut out = Vec::new();
        self.push_into(bytes, &mut out);
        out
    }

    pub fn push_into(&mut self, bytes: &[u8], out: &mut Vec<Decoded>) {
        self.buf.extend_from_slice(bytes);
        let mut pos = 0;
        loop {
            let rest = &self.buf[pos..];
            if rest.is_empty() {
                break;
            }
            if rest[0] != MAGIC {
                let skip = rest.iter().position(|&b| b == MAGIC).unwrap_or(rest.len());
                self.stats.garbage_bytes += skip as u64;
                pos += skip;
                continue;
            }
            if rest.len() < HEADER_LEN {
                break;
            }
            let len = rest[2] as usize;
            let total = FRAME_OVERHEAD + len;
            if rest.len() < total {
                break;
            }
            let body = &rest[1..HEADER_LEN + len];
            let crc = u16::from_le_bytes([rest[total - 2], rest[total - 1]]);
            if crc16_ccitt_false(body) != crc {
                // Treat this start byte as noise and rescan from the next one.
                self.stats.crc_failures += 1;
                pos += 1;
                continue;
            }
            match Message::parse(rest[1], &rest[HEADER_LEN..HEADER_LEN + len]) {
                Ok(msg) => {
                    self.stats.frames += 1;
                    out.push(Decoded { seq: rest[3], msg });
                }
                Err(_) => self.stats.malformed += 1,
            }
            pos += total;
        }
        self.buf.drain(..pos);
    }
}

/// One-shot decode of a complete byte buffer.
pub fn decode_stream(bytes: &[u8]) -> (Vec<Decoded>, Vec<u8>, DecodeStats) {
    let mut dec = StreamDecoder::new();
    let msgs = dec.push(bytes);
    (msgs, dec.buf, dec.stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::serial::message::{OffboardCommand, OFFBOARD_PAYLOAD_LEN};

    #[test]
    fn offboard_frame_is_30_bytes() {
        let bytes = encode(&Message::Offboard(OffboardCommand::passthrough([0.0; 6])), 0).unwrap();
        assert_eq!(bytes.len(), FRAME_OVERHEAD + OFFBOARD_PAYLOAD_LEN);
        assert_eq!(bytes.len(), 30);
        assert!(bytes[HEADER_LEN..HEADER_LEN + 24].iter().all(|&b| b == 0));
        let (msgs, residual, stats) = decode_stream(&bytes);
        assert_eq!(msgs.len(), 1);
        assert!(residual.is_empty());
        assert_eq!(stats.crc_failures, 0);
    }

    #[test]
    fn heartbeat_frame_is_6_bytes() {
        let bytes = encode(&Message::Heartbeat, 9).unwrap();
        assert_eq!(bytes.len(), 6);
        assert_eq!(&bytes[..4], &[MAGIC, 0x01, 0, 9]);
    }

    #[test]
    fn resyncs_after_garbage() {
        let mut bytes = vec![0x00, 0x13, 0x37];
        bytes.extend(encode(&Message::Heartbeat, 1).unwrap());
        let (msgs, _, stats) = decode_stream(&bytes);
        assert_eq!(msgs, vec![Decoded { seq: 1, msg: Message::Heartbeat }]);
        assert_eq!(stats.garbage_bytes, 3);
    }

    #[test]
    fn flipped_bit_fails_crc() {
        let mut bytes = encode(&Message::Offboard(OffboardCommand::passthrough([0.0; 6])), 0).unwrap();
        bytes[HEADER_LEN + 5] ^= 0x10;
        let (msgs, _, stats) = decode_stream(&bytes);
        assert!(msgs.is_empty());
        assert_eq!(stats.crc_failures, 1);
    }

    #[test]
    fn payload_overflow() {
        let err = encode(&Message::EchoRequest(vec![0; 256]), 0).unwrap_err();
        assert_eq!(err, ProtocolError::PayloadOverflow(256));
        assert!(encode(&Message::EchoRequest(vec![0; 255]), 0).is_ok());
    }

    #[test]
    fn valid_crc_unknown_id_is_malformed() {
        let mut frame = vec![MAGIC, 0x7F, 0, 0];
        let crc = crc16_ccitt_false(&frame[1..]);
        frame.extend_from_slice(&crc.to_le_bytes());
        frame.extend(encode(&Message::Heartbeat, 2).unwrap());
        let (msgs, _, stats) = decode_stream(&frame);
        assert_eq!(msgs.len(), 1);
        assert_eq!(stats.malformed, 1);
    }

    #[test]
    fn partial_frame_is_held() {
        let bytes = encode(&Message::Heartbeat, 0).unwrap();
        let mut dec = StreamDecoder::new();
        assert!(dec.push(&bytes[..4]).is_empty());
        assert_eq!(dec.residual().len(), 4);
        assert_eq!(dec.push(&bytes[4..]).len(), 1);
        assert!(dec.residual().is_empty());
    }
}
