//! Synthetic cable-driven arm: kinematics, random teleoperation trajectories,
//! a cable transmission error model and the clocked state-record simulator.

pub mod cable;
pub mod kinematics;
pub mod record;
pub mod sim;
pub mod trajectory;

pub use cable::{BacklashState, CableErrorModel, DynamicsModel};
pub use kinematics::{
    check_limits, forward_kinematics, forward_pose, home_position, inverse_kinematics, position_jacobian, Joints,
    JOINTS, JOINT_LIMITS,
};
pub use record::{layout, RavenStateRecord, RECORD_LEN};
pub use sim::{simulate_run, workspace_coverage, SimConfig, SimSample};
pub use trajectory::{generate_teleop_trajectories, JointState, Trajectory, TrajectoryConfig, Waypoint};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RobotError {
    #[error("joint {joint} value {value} outside its limits")]
    JointLimit { joint: usize, value: f64 },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(&'static str),
    #[error("invalid error model: {0}")]
    InvalidErrorModel(&'static str),
    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(&'static str),
}
