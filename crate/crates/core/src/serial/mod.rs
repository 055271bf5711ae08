//! Framed binary protocol between the companion computer and the firmware.

pub mod codec;
pub mod crc;
pub mod echo;
pub mod message;
pub mod transport;

use thiserror::Error;

pub use codec::{decode_stream, encode, DecodeStats, Decoded, StreamDecoder, FRAME_OVERHEAD, MAGIC};
pub use echo::{echo_roundtrip, rtt_stats, EchoError, RttStats, RttTracker};
pub use message::{AckCode, ImuData, Message, OffboardCommand, OffboardMode, OFFBOARD_PAYLOAD_LEN};
pub use transport::{
    inproc_pair, socket_pair, Clock, InprocEndpoint, LinkDelay, ManualClock, MonotonicClock,
    SocketTransport, Transport, TransportError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("payload of {0} bytes exceeds the 255-byte limit")]
    PayloadOverflow(usize),
    #[error("unknown message id 0x{0:02x}")]
    UnknownMessage(u8),
    #[error("message 0x{msg_id:02x} cannot have a {len}-byte payload")]
    BadLength { msg_id: u8, len: usize },
    #[error("malformed payload: {0}")]
    Malformed(String),
}

/// Frames outgoing messages with a wrapping sequence counter.
#[derive(Debug, Default, Clone)]
pub struct FrameWriter {
    seq: u8,
}

impl FrameWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Encodes `msg` and returns `(seq, bytes)`.
    pub fn frame(&mut self, msg: &Message) -> Result<(u8, Vec<u8>), ProtocolError> {
        let seq = self.seq;
        let bytes = encode(msg, seq)?;
        self.seq = self.seq.wrapping_add(1);
        Ok((seq, bytes))
    }
}
