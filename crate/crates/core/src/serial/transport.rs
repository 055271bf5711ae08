//! Byte transports between the companion and the firmware.
//!
//! Both transports are ordered, reliable byte streams with one sender and
//! one receiver per direction. The in-process link stamps every write with a
//! delivery time taken from a [`Clock`], so the same code runs on wall-clock
//! time for benchmarks and on simulated time inside the lockstep simulator.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::os::unix::net::UnixStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("peer disconnected")]
    Disconnected,
    #[error("transport i/o: {0}")]
    Io(#[from] io::Error),
}

/// Monotonic time source.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;

    /// Whether [`Clock::now`] advances on its own (as opposed to being
    /// stepped by a simulator).
    fn is_wall_clock(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn is_wall_clock(&self) -> bool {
        true
    }
}

/// Clock advanced explicitly, in nanoseconds.
#[derive(Debug, Default)]
pub struct ManualClock {
    nanos: AtomicU64,
}

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&self, t: Duration) {
        self.nanos.store(t.as_nanos() as u64, Ordering::SeqCst);
    }

    pub fn advance(&self, dt: Duration) {
        self.nanos.fetch_add(dt.as_nanos() as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }
}

/// Sleeps until `target` on a wall clock: coarse sleep, then yield for the
/// last stretch.
pub fn sleep_until(clock: &dyn Clock, target: Duration) {
    const SPIN_WINDOW: Duration = Duration::from_micros(150);
    loop {
        let now = clock.now();
        if now >= target {
            return;
        }
        let remaining = target - now;
        if remaining > SPIN_WINDOW {
            thread::sleep(remaining - SPIN_WINDOW);
        } else {
            thread::yield_now();
        }
    }
}

pub trait Transport: Send {
    fn send(&mut self, bytes: &[u8]) -> Result<(), TransportError>;

    /// Appends every byte that has arrived to `out` without blocking.
    /// Returns the number of bytes appended.
    fn poll(&mut self, out: &mut Vec<u8>) -> Result<usize, TransportError>;

    /// Blocks for at most `timeout` or until bytes may be ready.
    fn wait(&mut self, timeout: Duration) -> Result<(), TransportError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        (**self).send(bytes)
    }

    fn poll(&mut self, out: &mut Vec<u8>) -> Result<usize, TransportError> {
        (**self).poll(out)
    }

    fn wait(&mut self, timeout: Duration) -> Result<(), TransportError> {
        (**self).wait(timeout)
    }
}

/// Latency added to every write on one direction of an in-process link.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinkDelay {
    pub fixed: Duration,
    /// Uniform extra delay in `[0, jitter]`.
    pub jitter: Duration,
    pub seed: u64,
}

impl LinkDelay {
    pub fn fixed(d: Duration) -> Self {
        Self {
            fixed: d,
            ..Default::default()
        }
    }
}

#[derive(Debug)]
struct Packet {
    deliver_at: Duration,
    bytes: Vec<u8>,
}

/// One end of an in-process link.
pub struct InprocEndpoint {
    tx: Sender<Packet>,
    rx: Receiver<Packet>,
    pending: VecDeque<Packet>,
    clock: Arc<dyn Clock>,
    delay: LinkDelay,
    rng: ChaCha8Rng,
    last_deliver_at: Duration,
}

/// Creates a connected pair `(a, b)`. `a_to_b` delays writes made on `a`.
pub fn inproc_pair(
    clock: Arc<dyn Clock>,
    a_to_b: LinkDelay,
    b_to_a: LinkDelay,
) -> (InprocEndpoint, InprocEndpoint) {
    let (tx_ab, rx_ab) = mpsc::channel();
    let (tx_ba, rx_ba) = mpsc::channel();
    let make = |tx, rx, delay: LinkDelay| InprocEndpoint {
        tx,
        rx,
        pending: VecDeque::new(),
        clock: clock.clone(),
        delay,
        rng: ChaCha8Rng::seed_from_u64(delay.seed),
        last_deliver_at: Duration::ZERO,
    };
    (make(tx_ab, rx_ba, a_to_b), make(tx_ba, rx_ab, b_to_a))
}

impl InprocEndpoint {
    fn drain_channel(&mut self) -> Result<(), TransportError> {
        loop {
            match self.rx.try_recv() {
                Ok(p) => self.pending.push_back(p),
                Err(TryRecvError::Empty) => return Ok(()),
                Err(TryRecvError::Disconnected) => {
                    return if self.pending.is_empty() {
                        Err(TransportError::Disconnected)
                    } else {
                        Ok(())
                    }
                }
            }
        }
    }
}

impl Transport for InprocEndpoint {
    fn send(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        let mut delay = self.delay.fixed;
        if !self.delay.jitter.is_zero() {
            let extra = self.rng.random_range(0..=self.delay.jitter.as_nanos() as u64);
            delay += Duration::from_nanos(extra);
        }
        // Jitter must not reorder the stream.
        let deliver_at = (self.clock.now() + delay).max(self.last_deliver_at);
        self.last_deliver_at = deliver_at;
        self.tx
            .send(Packet {
                deliver_at,
                bytes: bytes.to_vec(),
            })
            .map_err(|_| TransportError::Disconnected)
    }

    fn poll(&mut self, out: &mut Vec<u8>) -> Result<usize, TransportError> {
        self.drain_channel()?;
        let now = self.clock.now();
        let mut n = 0;
        while self.pending.front().is_some_and(|p| p.deliver_at <= now) {
            let p = self.pending.pop_front().unwrap();
            n += p.bytes.len();
            out.extend_from_slice(&p.bytes);
        }
        Ok(n)
    }

    fn wait(&mut self, timeout: Duration) -> Result<(), TransportError> {
        if !self.clock.is_wall_clock() {
            return Ok(());
        }
        let deadline = self.clock.now() + timeout;
        if self.pending.is_empty() {
            match self.rx.recv_timeout(timeout) {
                Ok(p) => self.pending.push_back(p),
                Err(RecvTimeoutError::Timeout) => return Ok(()),
                Err(RecvTimeoutError::Disconnected) => return Err(TransportError::Disconnected),
            }
        }
        let due = self.pending.front().map(|p| p.deliver_at).unwrap_or(deadline);
        sleep_until(self.clock.as_ref(), due.min(deadline));
        Ok(())
    }
}

/// A connected Unix-domain socket pair.
pub struct SocketTransport {
    stream: UnixStream,
    // Bytes picked up by a blocking `wait`, handed out by the next `poll`.
    stash: Vec<u8>,
}

pub fn socket_pair() -> Result<(SocketTransport, SocketTransport), TransportError> {
    let (a, b) = UnixStream::pair()?;
    a.set_nonblocking(true)?;
    b.set_nonblocking(true)?;
    Ok((
        SocketTransport {
            stream: a,
            stash: Vec::new(),
        },
        SocketTransport {
            stream: b,
            stash: Vec::new(),
        },
    ))
}

impl Transport for SocketTransport {
    fn send(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        let mut written = 0;
        while written < bytes.len() {
            match self.stream.write(&bytes[written..]) {
                Ok(0) => return Err(TransportError::Disconnected),
                Ok(n) => written += n,
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::yield_now(),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }

    fn poll(&mut self, out: &mut Vec<u8>) -> Result<usize, TransportError> {
        let mut buf = [0u8; 4096];
        let mut total = self.stash.len();
        out.append(&mut self.stash);
        loop {
            match self.stream.read(&mut buf) {
                Ok(0) => {
                    return if total > 0 {
                        Ok(total)
                    } else {
                        Err(TransportError::Disconnected)
                    }
                }
                Ok(n) => {
                    out.extend_from_slice(&buf[..n]);
                    total += n;
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => return Ok(total),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn wait(&mut self, timeout: Duration) -> Result<(), TransportError> {
        if timeout.is_zero() || !self.stash.is_empty() {
            return Ok(());
        }
        self.stream.set_nonblocking(false)?;
        self.stream.set_read_timeout(Some(timeout))?;
        let mut buf = [0u8; 4096];
        let res = self.stream.read(&mut buf);
        self.stream.set_nonblocking(true)?;
        match res {
            Ok(0) => Err(TransportError::Disconnected),
            Ok(n) => {
                self.stash.extend_from_slice(&buf[..n]);
                Ok(())
            }
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut | io::ErrorKind::Interrupted
                ) =>
            {
                Ok(())
            }
            Err(e) => Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manual_clock_gates_delivery() {
        let clock = Arc::new(ManualClock::new());
        let (mut a, mut b) = inproc_pair(
            clock.clone(),
            LinkDelay::fixed(Duration::from_millis(2)),
            LinkDelay::default(),
        );
        a.send(b"hello").unwrap();
        let mut out = Vec::new();
        assert_eq!(b.poll(&mut out).unwrap(), 0);
        clock.advance(Duration::from_millis(1));
        assert_eq!(b.poll(&mut out).unwrap(), 0);
        clock.advance(Duration::from_millis(1));
        assert_eq!(b.poll(&mut out).unwrap(), 5);
        assert_eq!(out, b"hello");

        b.send(b"back").unwrap();
        out.clear();
        a.poll(&mut out).unwrap();
        assert_eq!(out, b"back");
    }

    #[test]
    fn jitter_preserves_order() {
        let clock = Arc::new(ManualClock::new());
        let delay = LinkDelay {
            fixed: Duration::from_micros(100),
            jitter: Duration::from_micros(500),
            seed: 3,
        };
        let (mut a, mut b) = inproc_pair(clock.clone(), delay, delay);
        for i in 0..200u8 {
            a.send(&[i]).unwrap();
            clock.advance(Duration::from_micros(10));
        }
        clock.advance(Duration::from_millis(10));
        let mut out = Vec::new();
        b.poll(&mut out).unwrap();
        assert_eq!(out, (0..200u8).collect::<Vec<_>>());
    }

    #[test]
    fn disconnect_is_reported() {
        let clock = Arc::new(ManualClock::new());
        let (a, mut b) = inproc_pair(clock, LinkDelay::default(), LinkDelay::default());
        drop(a);
        assert!(matches!(b.poll(&mut Vec::new()), Err(TransportError::Disconnected)));
    }

    #[test]
    fn socket_pair_round_trip() {
        let (mut a, mut b) = socket_pair().unwrap();
        a.send(&[1, 2, 3]).unwrap();
        b.wait(Duration::from_millis(100)).unwrap();
        let mut out = Vec::new();
        b.poll(&mut out).unwrap();
        assert_eq!(out, vec![1, 2, 3]);
    }

    #[test]
    fn wall_clock_delay_is_honored() {
        let clock: Arc<dyn Clock> = Arc::new(MonotonicClock::new());
        let (mut a, mut b) = inproc_pair(
            clock.clone(),
            LinkDelay::fixed(Duration::from_millis(3)),
            LinkDelay::default(),
        );
        let start = clock.now();
        a.send(b"x").unwrap();
        let mut out = Vec::new();
        while out.is_empty() {
            b.wait(Duration::from_millis(50)).unwrap();
            b.poll(&mut out).unwrap();
        }
        assert!(clock.now() - start >= Duration::from_millis(3));
    }
}
