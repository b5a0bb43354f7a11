//! End-effector pose from the three ball centers of the marker rig.
//!
//! The rig frame has its origin at the end-effector point; green sits at
//! `+d` on x, yellow at `+d` on y and red at `-d` on x. The pose is found by
//! minimizing the summed squared distance between observed and predicted
//! centers with Nelder-Mead, starting from a frame built directly from the
//! observations.

use serde::{Deserialize, Serialize};

use crate::geometry::{euler_to_rotmat, rotmat_to_euler, EulerAngles, Pose, RotMat, Vec3};
use crate::image::BallColor;
use crate::optim::{nelder_mead, NMConfig, OptimError};
use crate::prelude::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EffectorError {
    #[error("ball centers are collinear")]
    DegenerateGeometry,
    #[error("pose solve did not converge (best cost {} mm^2)", best.residual_cost)]
    NotConverged { best: EffectorPose },
    #[error(transparent)]
    Optim(#[from] OptimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerRigSpec {
    /// Distance from the end-effector point to each ball center, mm.
    pub d: f64,
    /// Ball radius, mm.
    pub ball_radius: f64,
}

impl Default for MarkerRigSpec {
    fn default() -> Self {
        Self { d: 38.0, ball_radius: 20.0 }
    }
}

impl MarkerRigSpec {
    /// Ball center in the rig frame.
    pub fn local_center(&self, color: BallColor) -> Vec3 {
        match color {
            BallColor::Green => Vec3::new(self.d, 0.0, 0.0),
            BallColor::Yellow => Vec3::new(0.0, self.d, 0.0),
            BallColor::Red => Vec3::new(-self.d, 0.0, 0.0),
        }
    }
}

/// Observed or predicted ball centers in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallCenters {
    pub green: Vec3,
    pub yellow: Vec3,
    pub red: Vec3,
}

impl BallCenters {
    pub fn get(&self, color: BallColor) -> Vec3 {
        match color {
            BallColor::Green => self.green,
            BallColor::Yellow => self.yellow,
            BallColor::Red => self.red,
        }
    }

    pub fn map(&self, mut f: impl FnMut(&Vec3) -> Vec3) -> Self {
        Self {
            green: f(&self.green),
            yellow: f(&self.yellow),
            red: f(&self.red),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectorPose {
    /// mm
    pub position: [f64; 3],
    pub orientation: EulerAngles,
    /// mm^2
    pub residual_cost: f64,
}

impl EffectorPose {
    pub fn from_pose(pose: &Pose, residual_cost: f64) -> Self {
        Self {
            position: [pose.position.x, pose.position.y, pose.position.z],
            orientation: rotmat_to_euler(&pose.orientation).angles,
            residual_cost,
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(Vec3::from(self.position), euler_to_rotmat(self.orientation))
    }

    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    fn params(&self) -> [f64; 6] {
        let e = self.orientation;
        let p = self.position;
        [p[0], p[1], p[2], e.alpha, e.beta, e.gamma]
    }

    fn from_params(x: &[f64], residual_cost: f64) -> Self {
        Self {
            position: [x[0], x[1], x[2]],
            orientation: EulerAngles::new(x[3], x[4], x[5]),
            residual_cost,
        }
    }
}

/// Predicted ball centers for a rig pose.
pub fn rig_forward(pose: &Pose, rig: &MarkerRigSpec) -> BallCenters {
    BallCenters {
        green: pose.transform_point(&rig.local_center(BallColor::Green)),
        yellow: pose.transform_point(&rig.local_center(BallColor::Yellow)),
        red: pose.transform_point(&rig.local_center(BallColor::Red)),
    }
}

/// Sum of squared distances between observed and predicted centers, mm^2.
pub fn rig_cost(pose: &Pose, rig: &MarkerRigSpec, observed: &BallCenters) -> f64 {
    let predicted = rig_forward(pose, rig);
    (observed.green - predicted.green).norm_squared()
        + (observed.yellow - predicted.yellow).norm_squared()
        + (observed.red - predicted.red).norm_squared()
}

/// Starting pose: origin at the green/red midpoint, x toward green, y toward
/// yellow (made orthogonal to x), z = x cross y.
pub fn initial_guess(observed: &BallCenters, rig: &MarkerRigSpec) -> Result<EffectorPose, EffectorError> {
    let origin = (observed.green + observed.red) * 0.5;
    let x = observed.green - origin;
    let y = observed.yellow - origin;
    if x.cross(&y).norm() <= 1e-9 * x.norm().max(1.0) * y.norm().max(1.0) {
        return Err(EffectorError::DegenerateGeometry);
    }
    let orientation = RotMat::from_axes(x, y).map_err(|_| EffectorError::DegenerateGeometry)?;
    let pose = Pose::new(origin, orientation);
    Ok(EffectorPose::from_pose(&pose, rig_cost(&pose, rig, observed)))
}

/// Default Nelder-Mead settings: 1 mm position and 0.02 rad angle steps.
pub fn default_nm_config() -> NMConfig {
    NMConfig::with_steps(vec![1.0, 1.0, 1.0, 0.02, 0.02, 0.02])
}

/// Minimizes [`rig_cost`] over position and Euler angles.
pub fn solve_effector_pose(observed: &BallCenters, rig: &MarkerRigSpec, cfg: &NMConfig) -> Result<EffectorPose, EffectorError> {
    let guess = initial_guess(observed, rig)?;
    let cost = |x: &[f64]| rig_cost(&Pose::from_params(&[x[0], x[1], x[2], x[3], x[4], x[5]]), rig, observed);
    // Re-evaluate through the same parameterization the solver uses.
    let x0 = guess.params();
    let res = nelder_mead(cost, &x0, cfg)?;
    let best = EffectorPose::from_params(&res.solution, res.final_objective);
    if !res.converged {
        return Err(EffectorError::NotConverged { best });
    }
    let mut best = best;
    best.orientation = best.orientation.wrapped();
    Ok(best)
}
