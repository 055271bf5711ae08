mod common;

use nalgebra::{DMatrix, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{factored_pinv, inf_norm, penrose, random_chunks, random_factors, random_message, rel_close};
use silflight::control_allocation::{
    blend_mixers, output_stage, pseudoinverse, ActuatorCommandVector, ControlInput, LoadedMixer, MixMatrix,
    MixerSource, OutputKind, OverrideState, PredefinedMixer, NUM_OUTPUTS,
};
use silflight::firmware::{
    ComplementaryFilter, ControlSource, Firmware, FirmwareConfig, ImuSample, ParamStore, RcChannels,
};
use silflight::motor_model::{
    general_mixer_column, motor_torque, omega_to_throttle, omega_to_voltage, propeller_torque, thrust_torque,
    throttle_to_omega, MotorGeometry, MotorParams, PropellerParams,
};
use silflight::serial::{encode, rtt_stats, OffboardCommand, StreamDecoder};
use silflight::sim::{rk4_step, RigidBody, RigidBodyState, Wrench};

fn loaded(m: PredefinedMixer) -> LoadedMixer {
    LoadedMixer::load(m.config()).unwrap()
}

fn predefined() -> impl Strategy<Value = PredefinedMixer> {
    (0..PredefinedMixer::ALL.len()).prop_map(|i| PredefinedMixer::ALL[i])
}

fn override_state() -> impl Strategy<Value = OverrideState> {
    (0..8usize).prop_map(|i| OverrideState::all().nth(i).unwrap())
}

fn bench_motor() -> (MotorParams, PropellerParams) {
    (
        MotorParams {
            resistance: 0.1,
            k_q: 0.01,
            k_v: 0.01,
            i0: 1.0,
            v_max: 12.0,
        },
        PropellerParams {
            c_t: 0.1,
            c_q: 0.01,
            diameter: 0.2,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pseudoinverse_satisfies_penrose_and_matches_oracle(seed in any::<u64>(), rank in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (fb, fc) = random_factors(&mut rng, rank);
        let a = &fb * &fc;
        let x = pseudoinverse(&MixMatrix::from_iterator(a.iter().copied()), None).unwrap();
        let x = DMatrix::from_iterator(10, 6, x.iter().copied());
        for r in penrose(&a, &x) {
            prop_assert!(r < 1e-8, "residual {r}");
        }
        let oracle = factored_pinv(&fb, &fc);
        prop_assert!(inf_norm(&(&x - &oracle)) < 1e-8 * inf_norm(&oracle).max(1.0));
    }

    #[test]
    fn mixing_is_linear(
        m in predefined(),
        u1 in prop::array::uniform6(-1.0f64..1.0),
        u2 in prop::array::uniform6(-1.0f64..1.0),
        alpha in -10.0f64..10.0,
        beta in -10.0f64..10.0,
    ) {
        let mixer = loaded(m);
        let combo: [f64; 6] = std::array::from_fn(|i| alpha * u1[i] + beta * u2[i]);
        let lhs = mixer.mix(&ControlInput::new(combo)).as_array();
        let a = mixer.mix(&ControlInput::new(u1)).as_array();
        let b = mixer.mix(&ControlInput::new(u2)).as_array();
        for c in 0..NUM_OUTPUTS {
            prop_assert!((lhs[c] - (alpha * a[c] + beta * b[c])).abs() < 1e-12);
        }
    }

    #[test]
    fn blend_copies_columns_and_primary_headers(p in predefined(), s in predefined(), ov in override_state()) {
        let (primary, secondary) = (loaded(p), loaded(s));
        let eff = blend_mixers(&primary, &secondary, ov);
        prop_assert_eq!(eff.channels, *primary.channels());
        for col in 0..6 {
            let from = match eff.sources[col] {
                MixerSource::Primary => &primary.inverse,
                MixerSource::Secondary => &secondary.inverse,
            };
            prop_assert_eq!(eff.sources[col] == MixerSource::Primary, ov.input_uses_primary(col));
            prop_assert!(eff.inverse.column(col).iter().zip(from.column(col).iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn saturation_is_idempotent(m in predefined(), tau in prop::collection::vec(prop::num::f64::ANY, NUM_OUTPUTS)) {
        let mixer = loaded(m);
        let tau = ActuatorCommandVector(nalgebra::SVector::from_iterator(tau.iter().copied()));
        let external = [0.25; NUM_OUTPUTS];
        let once = output_stage(&tau, mixer.channels(), None, &external);
        let twice = output_stage(&ActuatorCommandVector(once.into()), mixer.channels(), None, &external);
        prop_assert!(once.iter().zip(&twice).all(|(a, b)| a.to_bits() == b.to_bits()));
        for (c, ch) in mixer.channels().iter().enumerate() {
            match ch.kind {
                OutputKind::Motor => prop_assert!((0.0..=1.0).contains(&once[c])),
                OutputKind::Servo => prop_assert!((-1.0..=1.0).contains(&once[c])),
                _ => prop_assert_eq!(once[c], 0.25),
            }
        }
    }

    #[test]
    fn thrust_torque_matches_general_column(
        r in prop::array::uniform3(-0.5f64..0.5),
        axis in prop::array::uniform3(-1.0f64..1.0),
        spin in prop::bool::ANY,
    ) {
        let e = Vector3::from(axis);
        prop_assume!(e.norm() > 0.1);
        let geom = MotorGeometry { r: Vector3::from(r), e_hat: e.normalize(), d: if spin { 1.0 } else { -1.0 }, theta: 0.0 };
        let (_, prop_params) = bench_motor();
        let col = general_mixer_column(&geom, &prop_params, 1.225);
        for omega in [0.0, 100.0, 400.0, 1000.0] {
            let (f, q) = thrust_torque(omega, &geom, &prop_params, 1.225);
            let stacked = [f.x, f.y, f.z, q.x, q.y, q.z];
            let scale = stacked.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..6 {
                let expect = col[i] * omega * omega;
                prop_assert!((stacked[i] - expect).abs() <= 1e-12 * scale, "ω={} entry {}: {} vs {}", omega, i, stacked[i], expect);
            }
        }
    }

    #[test]
    fn motor_model_identities(w1 in 0.0f64..1000.0, w2 in 0.0f64..1000.0) {
        let (motor, prop_params) = bench_motor();
        let rho = 1.225;
        let (lo, hi) = if w1 < w2 { (w1, w2) } else { (w2, w1) };
        prop_assume!(hi > lo);
        prop_assert!(omega_to_voltage(hi, &motor, &prop_params, rho) > omega_to_voltage(lo, &motor, &prop_params, rho));
        let v = omega_to_voltage(w1, &motor, &prop_params, rho);
        let qm = motor_torque(v, w1, &motor);
        let qp = propeller_torque(w1, &prop_params, rho);
        prop_assert!(qm == qp || rel_close(qm, qp, 1e-9));
        let delta = omega_to_throttle(w1, &motor, &prop_params, rho);
        prop_assume!(delta < 1.0 && w1 > 1e-6);
        prop_assert!(rel_close(throttle_to_omega(delta, &motor, &prop_params, rho), w1, 1e-9));
    }

    #[test]
    fn quad_mixer_sums_rotor_contributions(omegas in prop::array::uniform4(0.0f64..1000.0)) {
        let (_, prop_params) = bench_motor();
        let rho = 1.225;
        let layout = PredefinedMixer::QuadrotorX.rotor_layout().unwrap();
        let mut total = [0.0; 6];
        let mut mixed = [0.0; 6];
        for (&(deg, yaw), w) in layout.iter().zip(omegas) {
            let geom = MotorGeometry::planar(0.25, deg.to_radians(), yaw);
            let (f, q) = thrust_torque(w, &geom, &prop_params, rho);
            let col = general_mixer_column(&geom, &prop_params, rho);
            for i in 0..3 {
                total[i] += f[i];
                total[i + 3] += q[i];
            }
            for (i, m) in mixed.iter_mut().enumerate() {
                *m += col[i] * w * w;
            }
        }
        let scale = total.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
        for i in 0..6 {
            prop_assert!((total[i] - mixed[i]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn codec_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let msg = random_message(&mut rng);
        let seq: u8 = rng.random();
        let frame = encode(&msg, seq).unwrap();
        let decoded = StreamDecoder::new().push(&frame);
        prop_assert_eq!(decoded.len(), 1);
        prop_assert_eq!(decoded[0].seq, seq);
        prop_assert_eq!(&decoded[0].msg, &msg);
    }

    #[test]
    fn decoding_is_chunking_invariant(seed in any::<u64>(), garbage in prop::collection::vec(any::<u8>(), 0..8)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stream = garbage;
        for i in 0..rng.random_range(1..6) {
            stream.extend(encode(&random_message(&mut rng), i as u8).unwrap());
        }
        let whole = StreamDecoder::new().push(&stream);
        let mut dec = StreamDecoder::new();
        let mut pieces = Vec::new();
        for chunk in random_chunks(&mut rng, &stream) {
            pieces.extend(dec.push(chunk));
        }
        prop_assert_eq!(pieces, whole);
    }

    #[test]
    fn rtt_stats_are_ordered(samples in prop::collection::vec(0.0f64..100.0, 1..200)) {
        let s = rtt_stats(&samples, 1.0).unwrap();
        prop_assert!(s.min_ms <= s.ave_ms && s.ave_ms <= s.max_ms);
        prop_assert_eq!(s.count, samples.len());
    }

    #[test]
    fn rigid_body_keeps_unit_quaternion(
        w0 in prop::array::uniform3(-20.0f64..20.0),
        torque in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let body = RigidBody::new(1.0, nalgebra::Matrix3::from_diagonal(&Vector3::new(0.01, 0.02, 0.03))).unwrap();
        let mut s = RigidBodyState { w: Vector3::from(w0), ..Default::default() };
        let wrench = Wrench::new(Vector3::zeros(), Vector3::from(torque));
        for _ in 0..400 {
            s = rk4_step(&s, &wrench, &body, 9.81, 0.0025);
            prop_assert!((s.q.quaternion().norm() - 1.0).abs() < 1e-9);
        }
    }
}

/// One firmware input frame generated from a seed.
#[derive(Clone, Copy)]
struct Frame {
    dt: f64,
    rc: RcChannels,
    offboard: Option<OffboardCommand>,
    imu: ImuSample,
}

fn fuzz_frames(seed: u64, n: usize) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rc = RcChannels::default();
    (0..n)
        .map(|i| {
            let odd = |rng: &mut ChaCha8Rng, p: f64, v: f64, bad: f64| if rng.random_bool(p) { bad } else { v };
            if rng.random_bool(0.05) {
                rc.arm = !rc.arm;
            }
            if rng.random_bool(0.05) {
                rc.throttle = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(-0.5..1.5) };
            }
            rc.valid = !rng.random_bool(0.02);
            rc.attitude_override = rng.random_bool(0.1);
            rc.throttle_override = rng.random_bool(0.1);
            let roll = rng.random_range(-0.1..0.1);
            rc.roll = odd(&mut rng, 0.01, roll, f64::NAN);
            let offboard = if rng.random_bool(0.6) {
                let u: [f32; 6] = std::array::from_fn(|_| rng.random_range(-30.0f32..30.0));
                let mut cmd = if rng.random_bool(0.5) {
                    OffboardCommand::passthrough(u)
                } else {
                    OffboardCommand::setpoint(u)
                };
                if rng.random_bool(0.02) {
                    cmd.u[2] = f32::INFINITY;
                }
                Some(cmd)
            } else {
                None
            };
            let mut imu = ImuSample::level(9.81, i as f64 * 0.0025);
            imu.gyro = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            imu.accel.x = odd(&mut rng, 0.01, 0.0, f64::NAN);
            Frame {
                dt: odd(&mut rng, 0.01, 0.0025, [0.0, -0.001, f64::NAN][i % 3]),
                rc,
                offboard,
                imu,
            }
        })
        .collect()
}

fn run_frames(seed: u64, frames: &[Frame]) -> Vec<([f64; NUM_OUTPUTS], bool, bool, ControlSource, f64)> {
    let mut params = ParamStore::new();
    let names = ["quadrotor_x", "hexarotor_x", "fixedwing_vtail", "passthrough"];
    params.set_from_str("PRIMARY_MIXER", names[(seed % 4) as usize]).unwrap();
    params.set_from_str("SECONDARY_MIXER", names[(seed / 4 % 4) as usize]).unwrap();
    let mut fw = Firmware::new(params, FirmwareConfig::default()).unwrap();
    frames
        .iter()
        .map(|f| {
            let out = fw.tick(f.dt, &f.rc, f.offboard.as_ref(), &f.imu);
            let st = fw.state();
            (out, st.armed, st.failsafe, st.control_source, st.last_offboard_age)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn firmware_safety_gate(seed in any::<u64>()) {
        let frames = fuzz_frames(seed, 300);
        let mut params = ParamStore::new();
        let names = ["quadrotor_x", "hexarotor_x", "fixedwing_vtail", "passthrough"];
        params.set_from_str("PRIMARY_MIXER", names[(seed % 4) as usize]).unwrap();
        let headers = *Firmware::new(params, FirmwareConfig::default()).unwrap().primary_mixer().channels();
        for (i, (out, armed, failsafe, source, age)) in run_frames(seed, &frames).into_iter().enumerate() {
            prop_assert!(out.iter().all(|v| v.is_finite()));
            if !armed || failsafe {
                for (c, ch) in headers.iter().enumerate() {
                    if matches!(ch.kind, OutputKind::Motor | OutputKind::Servo) {
                        prop_assert_eq!(out[c], 0.0, "tick {} channel {}", i, c);
                    }
                }
            }
            if age > 0.1 {
                prop_assert_eq!(source, ControlSource::Rc);
            }
        }
    }

    #[test]
    fn firmware_is_deterministic(seed in any::<u64>()) {
        let frames = fuzz_frames(seed, 200);
        let a = run_frames(seed, &frames);
        let b = run_frames(seed, &frames);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(x.0.iter().zip(&y.0).all(|(p, q)| p.to_bits() == q.to_bits()));
            prop_assert_eq!((x.1, x.2, x.3), (y.1, y.2, y.3));
        }
    }
}

#[test]
fn predefined_multirotors_have_full_row_rank_identity() {
    for m in [PredefinedMixer::QuadrotorX, PredefinedMixer::HexarotorX] {
        let mixer = loaded(m);
        let prod = mixer.forward * mixer.inverse;
        let rows: Vec<usize> = (0..6).filter(|&r| mixer.forward.row(r).iter().any(|v| *v != 0.0)).collect();
        assert_eq!(rows.len(), mixer.rank, "{}", m.name());
        let mut err: f64 = 0.0;
        for &r in &rows {
            let row_sum: f64 = rows.iter().map(|&c| (prod[(r, c)] - if r == c { 1.0 } else { 0.0 }).abs()).sum();
            err = err.max(row_sum);
        }
        assert!(err < 1e-9, "{}: ‖M M† − I‖ = {err}", m.name());
    }
}

#[test]
fn estimator_quaternion_stays_normalized_over_a_million_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut filter = ComplementaryFilter::new(0.02, 9.81);
    let mut worst: f64 = 0.0;
    for i in 0..1_000_000 {
        let imu = ImuSample {
            accel: Vector3::from_fn(|_, _| rng.random_range(-12.0..12.0)),
            gyro: Vector3::from_fn(|_, _| rng.random_range(-8.0..8.0)),
            t: i as f64 * 0.0025,
        };
        let est = filter.update(&imu, 0.0025);
        worst = worst.max((est.q.quaternion().norm() - 1.0).abs());
    }
    assert!(worst < 1e-9, "norm error {worst:e}");
    let q: UnitQuaternion<f64> = filter.attitude();
    assert!(q.coords.iter().all(|v| v.is_finite()));
}

#[test]
fn safety_fuzz_reaches_armed_flight() {
    let mut armed_ticks = 0;
    let mut driven_ticks = 0;
    for seed in 0..16 {
        for (out, armed, failsafe, _, _) in run_frames(seed, &fuzz_frames(seed, 300)) {
            if armed && !failsafe {
                armed_ticks += 1;
                if out.iter().any(|v| *v != 0.0) {
                    driven_ticks += 1;
                }
            }
        }
    }
    assert!(armed_ticks > 500 && driven_ticks > 100, "armed {armed_ticks}, driven {driven_ticks}");
}
