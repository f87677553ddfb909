//! Serial-arm kinematics and the quaternion Cartesian task.

mod chain;
mod pose;

pub use chain::{cartesian_rows, ChainConfig, DhRow, KinematicChain, CHAIN_SCHEMA};
pub use pose::{canonicalize, cartesian_task_error, gamma, skew, Pose, UNIT_TOLERANCE};

/// Joint configuration with velocities and timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: nalgebra::DVector<f64>,
    pub qdot: nalgebra::DVector<f64>,
    pub timestamp: f64,
}

impl JointState {
    pub fn at_rest(q: nalgebra::DVector<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            qdot: nalgebra::DVector::zeros(n),
            timestamp: 0.0,
        }
    }
}
