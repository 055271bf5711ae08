//! Lockstep 6-DOF multirotor simulator running the firmware through a
//! simulated board.

pub mod board;
pub mod clock;
pub mod dynamics;
pub mod forces;
pub mod rc_script;
pub mod runner;
pub mod scenario;
pub mod sensors;

pub use board::SilBoard;
pub use clock::SimClock;
pub use dynamics::{rk4_step, RigidBody, RigidBodyState, Wrench};
pub use forces::{ConstantWrench, ForcesAndMoments, MotorForces};
pub use rc_script::{RcScript, StickKeyframe, Switch, SwitchEvent};
pub use runner::{run_scenario, scenario_params, LogRow, ScenarioResult, Simulation, Tracking, CSV_HEADER};
pub use scenario::{bundled, ScenarioConfig, ScenarioError, BUNDLED};
pub use sensors::{SensorConfig, Sensors};
