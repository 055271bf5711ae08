use std::sync::Arc;
use std::thread;
use std::time::Duration;

use silflight::companion::{run_rtt_benchmark, BenchConfig, BenchMode, TransportKind};
use silflight::serial::{
    echo_roundtrip, encode, inproc_pair, socket_pair, Clock, LinkDelay, Message, MonotonicClock, OffboardCommand,
    StreamDecoder, Transport,
};

/// Answers every offboard command with an echo of its payload until the
/// link closes.
fn spawn_echo<T: Transport + 'static>(mut far: T) -> thread::JoinHandle<u64> {
    thread::spawn(move || {
        let mut dec = StreamDecoder::new();
        let mut buf = Vec::new();
        let mut echoed = 0;
        loop {
            buf.clear();
            if far.poll(&mut buf).is_err() {
                return echoed;
            }
            for d in dec.push(&buf) {
                if let Message::Offboard(cmd) = d.msg {
                    let reply = encode(&Message::EchoReply(cmd.payload().to_vec()), d.seq).unwrap();
                    if far.send(&reply).is_err() {
                        return echoed;
                    }
                    echoed += 1;
                }
            }
            if far.wait(Duration::from_millis(2)).is_err() {
                return echoed;
            }
        }
    })
}

#[test]
fn loopback_echo_returns_identical_payload() {
    let clock: Arc<dyn Clock> = Arc::new(MonotonicClock::new());
    let (mut near, far) = inproc_pair(clock.clone(), LinkDelay::default(), LinkDelay::default());
    let echo = spawn_echo(far);
    let mut dec = StreamDecoder::new();
    for i in 0..50u8 {
        let cmd = OffboardCommand::passthrough([i as f32, -1.5, 0.25, 3.0e5, -0.0, f32::MIN_POSITIVE]);
        let rtt = echo_roundtrip(&mut near, &mut dec, &cmd, i, clock.as_ref()).unwrap();
        assert!(rtt >= 0.0);
    }
    drop(near);
    assert_eq!(echo.join().unwrap(), 50);
}

#[test]
fn socket_transport_echoes_in_order() {
    let clock = MonotonicClock::new();
    let (mut near, far) = socket_pair().unwrap();
    let echo = spawn_echo(far);
    let mut dec = StreamDecoder::new();
    for i in 0..50u8 {
        let cmd = OffboardCommand::setpoint([0.1 * i as f32; 6]);
        assert!(echo_roundtrip(&mut near, &mut dec, &cmd, i, &clock).unwrap() >= 0.0);
    }
    drop(near);
    assert_eq!(echo.join().unwrap(), 50);
}

#[test]
fn injected_delay_sets_round_trip_time() {
    let report = run_rtt_benchmark(&BenchConfig {
        transport: TransportKind::Inproc,
        mode: BenchMode::Rate(200.0),
        duration: Duration::from_secs(1),
        inject_delay: Duration::from_millis(1),
    })
    .unwrap();
    let s = report.stats;
    assert!(s.min_ms >= 2.0, "min {}", s.min_ms);
    assert!(s.ave_ms <= 2.5, "ave {}", s.ave_ms);
    assert_eq!(report.payload_integrity(), 1.0);
    assert!((195..=201).contains(&s.count), "{} samples", s.count);
}

#[test]
fn socket_benchmark_rejects_injected_delay() {
    let err = run_rtt_benchmark(&BenchConfig {
        transport: TransportKind::Socket,
        mode: BenchMode::MaxRate,
        duration: Duration::from_millis(100),
        inject_delay: Duration::from_millis(1),
    });
    assert!(err.is_err());
}
