//! Software-in-the-loop flight-stack workbench: pseudoinverse control
//! allocation, a firmware-style control core, a framed serial protocol, a
//! lockstep multirotor simulator and a companion-computer controller.

pub mod companion;
pub mod control_allocation;
pub mod firmware;
pub mod motor_model;
pub mod serial;
pub mod sim;
