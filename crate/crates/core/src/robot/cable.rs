use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::kinematics::{Joints, JOINTS, SHAFT, THETA0};
use super::RobotError;
use crate::prelude::*;

/// Joint torques from a configuration-dependent gravity load, viscous
/// friction and inertia. Units are nominal (N m, N for insertion).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsModel {
    /// Gravity load on the elevation joint at full horizontal reach.
    pub gravity_elevation: f64,
    /// Gravity load along the insertion axis for a vertical shaft.
    pub gravity_insertion: f64,
    pub viscous: [f64; JOINTS],
    pub inertia: [f64; JOINTS],
}

impl Default for DynamicsModel {
    fn default() -> Self {
        Self {
            gravity_elevation: 1.0,
            gravity_insertion: 0.8,
            viscous: [0.6, 0.6, 0.004, 0.05, 0.05, 0.02, 0.02],
            inertia: [0.3, 0.3, 0.002, 0.01, 0.01, 0.005, 0.005],
        }
    }
}

impl DynamicsModel {
    pub fn torques(&self, q: &Joints, qd: &Joints, qdd: &Joints) -> Joints {
        let theta = THETA0 + q[1];
        let reach = (SHAFT + q[2]) / SHAFT;
        let (st, ct) = theta.sin_cos();
        let mut tau = [0.0; JOINTS];
        for i in 0..JOINTS {
            let inertia = match i {
                0 => self.inertia[0] * (st * reach).powi(2),
                1 => self.inertia[1] * reach * reach,
                _ => self.inertia[i],
            };
            tau[i] = self.viscous[i] * qd[i] + inertia * qdd[i];
        }
        tau[1] += self.gravity_elevation * reach * st;
        tau[2] += self.gravity_insertion * ct;
        tau
    }
}

/// Discrepancy between the encoder-side joint values and where the cables
/// actually put the joints, plus a fixed Cartesian offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CableErrorModel {
    /// Joint deflection per unit torque (cable stretch grows with tension).
    pub stiffness: [f64; JOINTS],
    /// Backlash half-width per joint.
    pub backlash: [f64; JOINTS],
    /// White joint noise per recorded sample.
    pub noise_sigma: [f64; JOINTS],
    /// Constant Cartesian offset of the true tool point, mm.
    pub static_offset: [f64; 3],
}

impl Default for CableErrorModel {
    fn default() -> Self {
        Self {
            stiffness: [0.009, 0.024, 4.0, 0.0, 0.0, 0.0, 0.0],
            backlash: [0.002, 0.002, 0.3, 0.0, 0.0, 0.0, 0.0],
            noise_sigma: [0.0003, 0.0003, 0.05, 0.0, 0.0, 0.0, 0.0],
            static_offset: [2.0, -1.5, 1.0],
        }
    }
}

impl CableErrorModel {
    pub fn zero() -> Self {
        Self {
            stiffness: [0.0; JOINTS],
            backlash: [0.0; JOINTS],
            noise_sigma: [0.0; JOINTS],
            static_offset: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<(), RobotError> {
        let all = self.stiffness.iter().chain(&self.backlash).chain(&self.noise_sigma).chain(&self.static_offset);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(RobotError::InvalidErrorModel("values must be finite"));
        }
        if self.backlash.iter().chain(&self.noise_sigma).any(|v| *v < 0.0) {
            return Err(RobotError::InvalidErrorModel("backlash and noise must be non-negative"));
        }
        Ok(())
    }

    /// Stretch deflection for the given torques.
    pub fn stretch(&self, tau: &Joints) -> Joints {
        core::array::from_fn(|i| self.stiffness[i] * tau[i])
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Joints {
        core::array::from_fn(|i| {
            if self.noise_sigma[i] > 0.0 {
                Normal::new(0.0, self.noise_sigma[i]).expect("finite sigma").sample(rng)
            } else {
                0.0
            }
        })
    }
}

/// Play operator per joint: the output follows the input only once the input
/// has moved more than the half-width away from it.
#[derive(Debug, Clone, PartialEq)]
pub struct BacklashState {
    output: Joints,
}

impl BacklashState {
    pub fn new(initial: &Joints) -> Self {
        Self { output: *initial }
    }

    pub fn update(&mut self, input: &Joints, half_width: &Joints) -> Joints {
        for i in 0..JOINTS {
            self.output[i] = self.output[i].clamp(input[i] - half_width[i], input[i] + half_width[i]);
        }
        self.output
    }
}
