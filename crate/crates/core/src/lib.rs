//! Simulator for intuitive stack-of-tasks human-robot co-manipulation.
//!
//! The crate is organised bottom-up:
//!
//! - [`kinematics`]: serial chain forward kinematics, Jacobians and the
//!   quaternion Cartesian task error.
//! - [`stack`]: prioritized task stacks solved in closed form or as a cascade
//!   of box-constrained quadratic programs.
//! - [`perception`]: synthetic skeleton tracking and point-cloud object
//!   detection.
//! - [`tactile`]: taxel interpolation, the deformation-to-force network and
//!   the friction-cone slip test.
//! - [`fsm`]: the phase machine that reconfigures the stack.
//! - [`metrics`]: the five trial-level evaluation metrics.
//! - [`harness`]: scenarios, the multi-rate simulation loop, logs, reports and
//!   the interactive session used by the socket server.

pub mod error;
pub mod fsm;
pub mod harness;
pub mod kinematics;
pub mod metrics;
pub mod perception;
pub mod stack;
pub mod tactile;

pub use error::{Error, Result};
