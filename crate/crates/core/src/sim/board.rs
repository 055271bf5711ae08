use std::sync::Arc;
use std::time::Duration;

use super::clock::SimClock;
use crate::control_allocation::NUM_OUTPUTS;
use crate::firmware::{Board, ImuSample, RcChannels};
use crate::serial::{InprocEndpoint, ManualClock, Transport};

/// Board backed by simulator state. The runner fills in the IMU sample, RC
/// frame and clock before each firmware cycle and reads the outputs back.
pub struct SilBoard {
    clock: SimClock,
    link_clock: Arc<ManualClock>,
    serial: InprocEndpoint,
    pub imu: ImuSample,
    pub rc: RcChannels,
    pub outputs: [f64; NUM_OUTPUTS],
    /// Set if the serial link reported an error.
    pub link_error: bool,
}

impl SilBoard {
    pub fn new(clock: SimClock, link_clock: Arc<ManualClock>, serial: InprocEndpoint, imu: ImuSample) -> Self {
        Self {
            clock,
            link_clock,
            serial,
            imu,
            rc: RcChannels::default(),
            outputs: [0.0; NUM_OUTPUTS],
            link_error: false,
        }
    }

    pub fn sync_clock(&mut self, clock: SimClock) {
        self.clock = clock;
        self.link_clock.set(Duration::from_nanos(clock.nanos()));
    }
}

impl Board for SilBoard {
    fn clock_micros(&self) -> u64 {
        self.clock.micros()
    }

    fn read_imu(&mut self) -> ImuSample {
        self.imu
    }

    fn read_rc(&mut self) -> RcChannels {
        self.rc
    }

    fn serial_read(&mut self, buf: &mut Vec<u8>) {
        if self.serial.poll(buf).is_err() {
            self.link_error = true;
        }
    }

    fn serial_write(&mut self, bytes: &[u8]) {
        if self.serial.send(bytes).is_err() {
            self.link_error = true;
        }
    }

    fn write_outputs(&mut self, outputs: &[f64; NUM_OUTPUTS]) {
        self.outputs = *outputs;
    }
}
