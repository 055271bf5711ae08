#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use silflight::firmware::ParamValue;
use silflight::serial::{AckCode, ImuData, Message, OffboardCommand};

pub fn random_name<R: Rng>(rng: &mut R) -> String {
    let len = rng.random_range(1..=64);
    (0..len).map(|_| rng.random_range(0x21u8..0x7f) as char).collect()
}

fn finite_f32<R: Rng>(rng: &mut R) -> f32 {
    rng.random_range(-1.0e6f32..1.0e6)
}

/// Any message the codec can carry, with finite floats so equality is meaningful.
pub fn random_message<R: Rng>(rng: &mut R) -> Message {
    let mut u = [0f32; 6];
    match rng.random_range(0..9) {
        0 => Message::Heartbeat,
        1 => {
            u.iter_mut().for_each(|v| *v = finite_f32(rng));
            Message::Offboard(OffboardCommand::passthrough(u))
        }
        2 => {
            u.iter_mut().for_each(|v| *v = finite_f32(rng));
            Message::Offboard(OffboardCommand::setpoint(u))
        }
        3 => Message::ParamRequest { name: random_name(rng) },
        4 => {
            let value = if rng.random_bool(0.5) {
                ParamValue::Int(rng.random())
            } else {
                ParamValue::Real(rng.random_range(-1e12..1e12))
            };
            Message::ParamValue {
                name: random_name(rng),
                value,
            }
        }
        5 => Message::Imu(ImuData {
            t_us: rng.random(),
            accel: [finite_f32(rng), finite_f32(rng), finite_f32(rng)],
            gyro: [finite_f32(rng), finite_f32(rng), finite_f32(rng)],
        }),
        6 => {
            let len = rng.random_range(0..=255);
            Message::EchoRequest((0..len).map(|_| rng.random()).collect())
        }
        7 => {
            let len = rng.random_range(0..=255);
            Message::EchoReply((0..len).map(|_| rng.random()).collect())
        }
        _ => {
            let code = [AckCode::Ok, AckCode::UnknownParam, AckCode::TypeMismatch, AckCode::Rejected]
                [rng.random_range(0..4)];
            Message::Ack {
                msg_id: rng.random(),
                code,
            }
        }
    }
}

/// Splits `bytes` at random points into consecutive slices.
pub fn random_chunks<'a, R: Rng>(rng: &mut R, bytes: &'a [u8]) -> Vec<&'a [u8]> {
    let mut out = Vec::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        let n = rng.random_range(1..=rest.len().min(40));
        let (head, tail) = rest.split_at(n);
        out.push(head);
        rest = tail;
    }
    out
}

/// 6×10 matrix with entries in [−2, 2]; when `rank` is below 6 it is built as
/// a product of 6×rank and rank×10 factors.
/// Random 6×10 matrix of the given rank, as full-rank factors `(B, C)` with
/// `A = B·C`. Full rank uses `B = I`.
pub fn random_factors<R: Rng>(rng: &mut R, rank: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut entry = || rng.random_range(-2.0..2.0);
    if rank >= 6 {
        (DMatrix::identity(6, 6), DMatrix::from_fn(6, 10, |_, _| entry()))
    } else {
        let b = DMatrix::from_fn(6, rank, |_, _| entry());
        let c = DMatrix::from_fn(rank, 10, |_, _| entry());
        (b, c)
    }
}

pub fn random_matrix<R: Rng>(rng: &mut R, rank: usize) -> DMatrix<f64> {
    let (b, c) = random_factors(rng, rank);
    b * c
}

/// Pseudoinverse of `B·C` from full-rank factors:
/// `Cᵀ(CCᵀ)⁻¹(BᵀB)⁻¹Bᵀ`. No SVD involved.
pub fn factored_pinv(b: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let cct = (c * c.transpose()).try_inverse().expect("C has full row rank");
    let btb = (b.transpose() * b).try_inverse().expect("B has full column rank");
    c.transpose() * cct * btb * b.transpose()
}

pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// The four Moore-Penrose residuals, computed directly with nalgebra products.
pub fn penrose(a: &DMatrix<f64>, x: &DMatrix<f64>) -> [f64; 4] {
    let ax = a * x;
    let xa = x * a;
    [
        inf_norm(&(&ax * a - a)),
        inf_norm(&(&xa * x - x)),
        inf_norm(&(&ax - ax.transpose())),
        inf_norm(&(&xa - xa.transpose())),
    ]
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}
