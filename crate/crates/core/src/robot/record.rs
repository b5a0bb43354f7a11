use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::prelude::*;

pub const RECORD_LEN: usize = 118;

/// Where each field group sits in the 118 floats.
pub mod layout {
    use core::ops::Range;

    /// (a) reported tool position, mm
    pub const REPORTED_POSITION: Range<usize> = 0..3;
    /// (a) reported tool orientation, row-major 3x3
    pub const REPORTED_ROTATION: Range<usize> = 3..12;
    /// (b) desired tool position, mm
    pub const DESIRED_POSITION: Range<usize> = 12..15;
    /// (b) desired tool orientation, row-major 3x3
    pub const DESIRED_ROTATION: Range<usize> = 15..24;
    /// (c) joint positions from the encoders
    pub const JOINT_POSITIONS: Range<usize> = 24..31;
    /// (d) desired joint positions
    pub const DESIRED_JOINTS: Range<usize> = 31..38;
    /// (e) motor velocities
    pub const MOTOR_VELOCITIES: Range<usize> = 38..45;
    /// (e) joint velocities
    pub const JOINT_VELOCITIES: Range<usize> = 45..52;
    /// (f) motor torques
    pub const TORQUES: Range<usize> = 52..59;
    /// (g) motor positions
    pub const MOTOR_POSITIONS: Range<usize> = 59..66;
    /// (g) DAC commands
    pub const DAC: Range<usize> = 66..73;
    /// (g) joint accelerations
    pub const JOINT_ACCELERATIONS: Range<usize> = 73..80;
    /// (g) desired grasp opening
    pub const DESIRED_GRASP: usize = 80;
    /// (g) zero padding up to 118
    pub const PADDING: Range<usize> = 81..118;

    /// Text form stored in dataset headers.
    pub const DESCRIPTOR: &str = "eeprec-ravenstate-v1;\
reported_position=0..3;reported_rotation=3..12;\
desired_position=12..15;desired_rotation=15..24;\
joint_positions=24..31;desired_joints=31..38;\
motor_velocities=38..45;joint_velocities=45..52;torques=52..59;\
motor_positions=59..66;dac=66..73;joint_accelerations=73..80;\
desired_grasp=80;padding=81..118";
}

/// One arm's state message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RavenStateRecord {
    pub timestamp: f64,
    pub values: Vec<f64>,
}

impl RavenStateRecord {
    pub fn zeroed(timestamp: f64) -> Self {
        Self {
            timestamp,
            values: vec![0.0; RECORD_LEN],
        }
    }

    pub fn field(&self, r: Range<usize>) -> &[f64] {
        &self.values[r]
    }

    pub fn set_field(&mut self, r: Range<usize>, v: &[f64]) {
        self.values[r].copy_from_slice(v);
    }

    pub fn reported_position(&self) -> Vec3 {
        Vec3::from_column_slice(&self.values[layout::REPORTED_POSITION])
    }

    pub fn joint_positions(&self) -> [f64; 7] {
        self.values[layout::JOINT_POSITIONS].try_into().expect("7 joints")
    }
}
