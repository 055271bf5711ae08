//! Wall-clock RTT benchmark: a firmware thread echoes offboard commands
//! while the companion measures round-trip times.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::control_allocation::NUM_OUTPUTS;
use crate::firmware::{names, Board, Firmware, FirmwareConfig, ImuSample, ParamStore, ParamValue, RcChannels};
use crate::serial::{
    echo::StatsError, encode, inproc_pair, rtt_stats, socket_pair, Clock, LinkDelay, Message,
    MonotonicClock, OffboardCommand, RttStats, RttTracker, StreamDecoder, Transport, TransportError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Inproc,
    Socket,
}

impl std::str::FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inproc" => Ok(TransportKind::Inproc),
            "socket" => Ok(TransportKind::Socket),
            other => Err(format!("unknown transport '{other}' (expected inproc or socket)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchMode {
    /// Commands sent on a fixed schedule.
    Rate(f64),
    /// Next command goes out as soon as the previous echo is back.
    MaxRate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub transport: TransportKind,
    pub mode: BenchMode,
    pub duration: Duration,
    /// Added to each direction of an in-process link.
    pub inject_delay: Duration,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            transport: TransportKind::Inproc,
            mode: BenchMode::Rate(400.0),
            duration: Duration::from_secs(5),
            inject_delay: Duration::ZERO,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("invalid benchmark setup: {0}")]
    Config(String),
    #[error("no echo replies received")]
    NoReplies(#[from] StatsError),
    #[error("firmware thread failed")]
    Firmware,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub stats: RttStats,
    pub sent: u64,
    pub received: u64,
    /// Replies whose payload differed from what was sent.
    pub mismatches: u64,
    pub elapsed_s: f64,
    /// Offboard payload bytes echoed per second, one direction.
    pub payload_bytes_per_s: f64,
}

impl BenchReport {
    pub fn payload_integrity(&self) -> f64 {
        if self.received == 0 {
            return 0.0;
        }
        (self.received - self.mismatches) as f64 / self.received as f64
    }

    /// Text table with one row of statistics.
    pub fn table(&self) -> String {
        let s = &self.stats;
        format!(
            "{:>10} {:>10} {:>10} {:>16}\n{:>10.3} {:>10.3} {:>10.3} {:>16.1}\n",
            "ave (ms)", "max (ms)", "min (ms)", "received (Hz)", s.ave_ms, s.max_ms, s.min_ms, s.received_rate_hz
        )
    }
}

/// Board for the benchmark firmware: a real clock, a level IMU, a quiet RC
/// link and the serial transport.
struct BenchBoard<T: Transport> {
    clock: MonotonicClock,
    transport: T,
    failed: bool,
}

impl<T: Transport> Board for BenchBoard<T> {
    fn clock_micros(&self) -> u64 {
        self.clock.now().as_micros() as u64
    }

    fn read_imu(&mut self) -> ImuSample {
        ImuSample::level(9.81, self.clock.now().as_secs_f64())
    }

    fn read_rc(&mut self) -> RcChannels {
        RcChannels::default()
    }

    fn serial_read(&mut self, buf: &mut Vec<u8>) {
        if self.transport.poll(buf).is_err() {
            self.failed = true;
        }
    }

    fn serial_write(&mut self, bytes: &[u8]) {
        if self.transport.send(bytes).is_err() {
            self.failed = true;
        }
    }

    fn write_outputs(&mut self, _: &[f64; NUM_OUTPUTS]) {}
}

/// Idle wake-up period of the firmware loop.
const FIRMWARE_IDLE: Duration = Duration::from_micros(2500);

fn spawn_firmware<T: Transport + 'static>(transport: T, stop: Arc<AtomicBool>) -> thread::JoinHandle<bool> {
    thread::spawn(move || {
        let mut params = ParamStore::new();
        params.set(names::SERIAL_ECHO, ParamValue::Int(1)).expect("registered");
        let mut fw = match Firmware::new(params, FirmwareConfig::default()) {
            Ok(fw) => fw,
            Err(_) => return false,
        };
        let mut board = BenchBoard {
            clock: MonotonicClock::new(),
            transport,
            failed: false,
        };
        while !stop.load(Ordering::Relaxed) {
            if board.transport.wait(FIRMWARE_IDLE).is_err() {
                break;
            }
            fw.run_cycle(&mut board);
            if board.failed {
                break;
            }
        }
        true
    })
}

fn command_for(n: u64) -> OffboardCommand {
    let k = n as f32;
    OffboardCommand::passthrough([k, -k, 0.5 * k, 1.0, (n % 7) as f32, (n % 13) as f32])
}

fn run_companion<T: Transport>(
    transport: &mut T,
    clock: &MonotonicClock,
    cfg: &BenchConfig,
) -> Result<(RttTracker, u64, f64), BenchError> {
    let mut tracker = RttTracker::new();
    let mut decoder = StreamDecoder::new();
    let mut buf = Vec::new();
    let mut sent = 0u64;
    let start = clock.now();
    let end = start + cfg.duration;

    let mut drain = |transport: &mut T, tracker: &mut RttTracker| -> Result<usize, BenchError> {
        buf.clear();
        transport.poll(&mut buf)?;
        let now = clock.now();
        let mut replies = 0;
        for d in decoder.push(&buf) {
            if let Message::EchoReply(p) = d.msg {
                tracker.on_reply(d.seq, &p, now);
                replies += 1;
            }
        }
        Ok(replies)
    };

    match cfg.mode {
        BenchMode::MaxRate => {
            while clock.now() < end {
                let cmd = command_for(sent);
                let seq = sent as u8;
                let frame = encode(&Message::Offboard(cmd), seq).expect("fits");
                tracker.on_sent(seq, cmd.payload().to_vec(), clock.now());
                transport.send(&frame)?;
                sent += 1;
                let deadline = clock.now() + crate::serial::echo::ECHO_TIMEOUT;
                while tracker.outstanding() > 0 && clock.now() < deadline {
                    transport.wait(Duration::from_millis(5))?;
                    drain(transport, &mut tracker)?;
                }
            }
        }
        BenchMode::Rate(hz) => {
            let period = Duration::from_secs_f64(1.0 / hz);
            let mut next = start;
            while clock.now() < end {
                let now = clock.now();
                if now >= next {
                    let cmd = command_for(sent);
                    let seq = sent as u8;
                    let frame = encode(&Message::Offboard(cmd), seq).expect("fits");
                    tracker.on_sent(seq, cmd.payload().to_vec(), now);
                    transport.send(&frame)?;
                    sent += 1;
                    next += period;
                    continue;
                }
                let until_next = next - now;
                transport.wait(until_next)?;
                drain(transport, &mut tracker)?;
            }
            // Collect the stragglers.
            let deadline = clock.now() + Duration::from_millis(100);
            while tracker.outstanding() > 0 && clock.now() < deadline {
                transport.wait(Duration::from_millis(5))?;
                drain(transport, &mut tracker)?;
            }
        }
    }
    let elapsed = (clock.now() - start).as_secs_f64();
    Ok((tracker, sent, elapsed))
}

pub fn run_rtt_benchmark(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    if let BenchMode::Rate(hz) = cfg.mode {
        if !(hz.is_finite() && hz > 0.0) {
            return Err(BenchError::Config(format!("rate must be positive, got {hz}")));
        }
    }
    if cfg.duration.is_zero() {
        return Err(BenchError::Config("duration must be positive".into()));
    }
    let clock = MonotonicClock::new();
    let stop = Arc::new(AtomicBool::new(false));

    let (tracker, sent, elapsed) = match cfg.transport {
        TransportKind::Inproc => {
            let delay = LinkDelay::fixed(cfg.inject_delay);
            let shared: Arc<dyn Clock> = Arc::new(clock);
            let (mut comp, fw_end) = inproc_pair(shared, delay, delay);
            let handle = spawn_firmware(fw_end, stop.clone());
            let res = run_companion(&mut comp, &clock, cfg);
            stop.store(true, Ordering::Relaxed);
            drop(comp);
            let ok = handle.join().unwrap_or(false);
            let r = res?;
            if !ok {
                return Err(BenchError::Firmware);
            }
            r
        }
        TransportKind::Socket => {
            if !cfg.inject_delay.is_zero() {
                return Err(BenchError::Config("delay injection needs the inproc transport".into()));
            }
            let (mut comp, fw_end) = socket_pair()?;
            let handle = spawn_firmware(fw_end, stop.clone());
            let res = run_companion(&mut comp, &clock, cfg);
            stop.store(true, Ordering::Relaxed);
            drop(comp);
            let ok = handle.join().unwrap_or(false);
            let r = res?;
            if !ok {
                return Err(BenchError::Firmware);
            }
            r
        }
    };

    let samples = tracker.samples_ms();
    let stats = rtt_stats(samples, elapsed)?;
    let received = samples.len() as u64 + tracker.mismatches();
    Ok(BenchReport {
        stats,
        sent,
        received,
        mismatches: tracker.mismatches(),
        elapsed_s: elapsed,
        payload_bytes_per_s: samples.len() as f64 * crate::serial::OFFBOARD_PAYLOAD_LEN as f64 / elapsed,
    })
}
