use nalgebra::Vector3;

use super::rc::RcChannels;
use crate::control_allocation::NUM_OUTPUTS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Specific force, body frame (m/s²).
    pub accel: Vector3<f64>,
    /// Angular rate, body frame (rad/s).
    pub gyro: Vector3<f64>,
    pub t: f64,
}

impl ImuSample {
    /// Sitting level and still in gravity `g`.
    pub fn level(g: f64, t: f64) -> Self {
        Self {
            accel: Vector3::new(0.0, 0.0, -g),
            gyro: Vector3::zeros(),
            t,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.accel.iter().chain(self.gyro.iter()).all(|v| v.is_finite()) && self.t.is_finite()
    }
}

/// Hardware the firmware runs against. A flight board and the simulator
/// both implement this; the firmware itself never knows which.
pub trait Board {
    fn clock_micros(&self) -> u64;
    fn read_imu(&mut self) -> ImuSample;
    fn read_rc(&mut self) -> RcChannels;
    /// Appends every serial byte received since the last call.
    fn serial_read(&mut self, buf: &mut Vec<u8>);
    fn serial_write(&mut self, bytes: &[u8]);
    fn write_outputs(&mut self, outputs: &[f64; NUM_OUTPUTS]);
}
