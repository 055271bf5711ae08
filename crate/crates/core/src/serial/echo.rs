//! Round-trip timing of offboard commands echoed back by the firmware.

use std::collections::HashMap;
use std::time::Duration;

use thiserror::Error;

use super::codec::{encode, StreamDecoder};
use super::message::{Message, OffboardCommand};
use super::transport::{Clock, Transport, TransportError};
use super::ProtocolError;

pub const ECHO_TIMEOUT: Duration = Duration::from_secs(1);

#[derive(Debug, Error)]
pub enum EchoError {
    #[error("no echo within {0:?}")]
    Timeout(Duration),
    #[error("echoed payload differs from the command sent")]
    PayloadMismatch,
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no RTT samples")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttStats {
    pub ave_ms: f64,
    pub max_ms: f64,
    pub min_ms: f64,
    pub count: usize,
    /// Echoes received per second over the run.
    pub received_rate_hz: f64,
}

pub fn rtt_stats(samples_ms: &[f64], duration_s: f64) -> Result<RttStats, StatsError> {
    if samples_ms.is_empty() {
        return Err(StatsError::Empty);
    }
    let count = samples_ms.len();
    let sum: f64 = samples_ms.iter().sum();
    let max = samples_ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = samples_ms.iter().copied().fold(f64::INFINITY, f64::min);
    // The mean of equal values must equal them exactly.
    let ave = (sum / count as f64).clamp(min, max);
    Ok(RttStats {
        ave_ms: ave,
        max_ms: max,
        min_ms: min,
        count,
        received_rate_hz: if duration_s > 0.0 {
            count as f64 / duration_s
        } else {
            f64::INFINITY
        },
    })
}

/// Matches echo replies to the commands that caused them, by frame sequence
/// number and payload.
#[derive(Debug, Default)]
pub struct RttTracker {
    outstanding: HashMap<u8, (Duration, Vec<u8>)>,
    samples_ms: Vec<f64>,
    mismatches: u64,
    unmatched: u64,
}

impl RttTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_sent(&mut self, seq: u8, payload: Vec<u8>, at: Duration) {
        self.outstanding.insert(seq, (at, payload));
    }

    /// Returns the RTT in ms when the reply matches an outstanding command.
    pub fn on_reply(&mut self, seq: u8, payload: &[u8], at: Duration) -> Option<f64> {
        let Some((sent_at, sent)) = self.outstanding.remove(&seq) else {
            self.unmatched += 1;
            return None;
        };
        if sent != payload {
            self.mismatches += 1;
            return None;
        }
        let rtt = at.saturating_sub(sent_at).as_secs_f64() * 1e3;
        self.samples_ms.push(rtt);
        Some(rtt)
    }

    pub fn samples_ms(&self) -> &[f64] {
        &self.samples_ms
    }

    pub fn mismatches(&self) -> u64 {
        self.mismatches
    }

    pub fn unmatched(&self) -> u64 {
        self.unmatched
    }

    pub fn outstanding(&self) -> usize {
        self.outstanding.len()
    }
}

/// Sends one offboard command and blocks until the firmware echoes it.
/// The far end must be running with echo enabled.
pub fn echo_roundtrip(
    transport: &mut dyn Transport,
    decoder: &mut StreamDecoder,
    cmd: &OffboardCommand,
    seq: u8,
    clock: &dyn Clock,
) -> Result<f64, EchoError> {
    let frame = encode(&Message::Offboard(*cmd), seq)?;
    let sent_at = clock.now();
    transport.send(&frame)?;
    let payload = cmd.payload();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        transport.poll(&mut buf)?;
        for d in decoder.push(&buf) {
            if let Message::EchoReply(p) = d.msg {
                if d.seq != seq {
                    continue;
                }
                if p != payload {
                    return Err(EchoError::PayloadMismatch);
                }
                return Ok(clock.now().saturating_sub(sent_at).as_secs_f64() * 1e3);
            }
        }
        let elapsed = clock.now().saturating_sub(sent_at);
        if elapsed >= ECHO_TIMEOUT {
            return Err(EchoError::Timeout(ECHO_TIMEOUT));
        }
        transport.wait((ECHO_TIMEOUT - elapsed).min(Duration::from_millis(5)))?;
    }
}
