use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cable::{BacklashState, CableErrorModel, DynamicsModel};
use super::kinematics::{position_jacobian, unchecked_fk, Joints, JOINTS};
use super::record::{layout, RavenStateRecord};
use super::trajectory::Trajectory;
use super::RobotError;
use crate::geometry::Vec3;
use crate::prelude::*;
use crate::scene::WorkspaceBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Control loop rate, Hz.
    pub rate_hz: f64,
    /// Keep one record every this many loop steps.
    pub record_every: usize,
    /// How far ahead of the encoders the desired pose runs, s.
    pub desired_lead: f64,
    /// Motor turns per joint unit.
    pub gear_ratios: [f64; JOINTS],
    /// DAC counts per unit torque.
    pub dac_per_torque: f64,
    pub dynamics: DynamicsModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            rate_hz: 1000.0,
            record_every: 170,
            desired_lead: 0.005,
            gear_ratios: [12.0, 12.0, 0.3, 8.0, 8.0, 8.0, 8.0],
            dac_per_torque: 2000.0,
            dynamics: DynamicsModel::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), RobotError> {
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(RobotError::InvalidSimConfig("rate must be positive"));
        }
        if self.record_every == 0 {
            return Err(RobotError::InvalidSimConfig("record_every must be at least 1"));
        }
        if !(self.desired_lead >= 0.0) {
            return Err(RobotError::InvalidSimConfig("desired lead must be non-negative"));
        }
        Ok(())
    }

    /// Effective recording period, s.
    pub fn record_period(&self) -> f64 {
        self.record_every as f64 / self.rate_hz
    }
}

/// One recorded state with the ground-truth tool position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSample {
    pub trajectory_id: u32,
    pub record: RavenStateRecord,
    pub true_position: [f64; 3],
}

impl SimSample {
    /// True minus reported position, mm.
    pub fn error(&self) -> Vec3 {
        Vec3::from(self.true_position) - self.record.reported_position()
    }
}

fn rotation_row_major(m: &nalgebra::Matrix3<f64>) -> [f64; 9] {
    core::array::from_fn(|k| m[(k / 3, k % 3)])
}

/// Run one trajectory through the clocked loop. Every step advances the
/// backlash state; every `record_every`-th step emits a record.
///
/// The encoder side (`q`) is the trajectory itself. The joint side is the
/// backlash output plus noise, and the true tool point adds the torque-driven
/// cable stretch mapped through the Jacobian plus the static offset.
pub fn simulate_run<R: Rng + ?Sized>(
    traj: &Trajectory,
    err: &CableErrorModel,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<Vec<SimSample>, RobotError> {
    cfg.validate()?;
    err.validate()?;
    let dt = 1.0 / cfg.rate_hz;
    let steps = (traj.duration() * cfg.rate_hz).floor() as usize;
    let t0 = traj.start_time();
    let mut play = BacklashState::new(&traj.sample(t0).q);
    let offset = Vec3::from(err.static_offset);
    let mut out = Vec::with_capacity(steps / cfg.record_every + 1);

    for k in 0..=steps {
        let t = t0 + k as f64 * dt;
        let s = traj.sample(t);
        let joint_side = play.update(&s.q, &err.backlash);
        if k % cfg.record_every != 0 {
            continue;
        }
        let noise = err.sample_noise(rng);
        let tau = cfg.dynamics.torques(&s.q, &s.qd, &s.qdd);
        let desired = traj.sample(t + cfg.desired_lead).q;

        let q_true: Joints = core::array::from_fn(|i| joint_side[i] + noise[i]);
        let stretch = err.stretch(&tau);
        let jac = position_jacobian(&q_true);
        let mut p_true = unchecked_fk(&q_true).0 + offset;
        for i in 0..JOINTS {
            p_true += jac[i] * stretch[i];
        }

        let (p, r) = unchecked_fk(&s.q);
        let (pd, rd) = unchecked_fk(&desired);
        let mut rec = RavenStateRecord::zeroed(t);
        rec.set_field(layout::REPORTED_POSITION, p.as_slice());
        rec.set_field(layout::REPORTED_ROTATION, &rotation_row_major(&r));
        rec.set_field(layout::DESIRED_POSITION, pd.as_slice());
        rec.set_field(layout::DESIRED_ROTATION, &rotation_row_major(&rd));
        rec.set_field(layout::JOINT_POSITIONS, &s.q);
        rec.set_field(layout::DESIRED_JOINTS, &desired);
        let g = &cfg.gear_ratios;
        let motor_vel: Joints = core::array::from_fn(|i| g[i] * s.qd[i]);
        let motor_pos: Joints = core::array::from_fn(|i| g[i] * s.q[i]);
        let dac: Joints = core::array::from_fn(|i| (tau[i] * cfg.dac_per_torque).round());
        rec.set_field(layout::MOTOR_VELOCITIES, &motor_vel);
        rec.set_field(layout::JOINT_VELOCITIES, &s.qd);
        rec.set_field(layout::TORQUES, &tau);
        rec.set_field(layout::MOTOR_POSITIONS, &motor_pos);
        rec.set_field(layout::DAC, &dac);
        rec.set_field(layout::JOINT_ACCELERATIONS, &s.qdd);
        rec.values[layout::DESIRED_GRASP] = desired[5] + desired[6];

        out.push(SimSample {
            trajectory_id: traj.id,
            record: rec,
            true_position: p_true.into(),
        });
    }
    Ok(out)
}

/// Fraction of the `cells^3` occupancy grid over `ws` visited by `points`.
pub fn workspace_coverage<'a>(points: impl IntoIterator<Item = &'a Vec3>, ws: &WorkspaceBox, cells: usize) -> f64 {
    let mut hit = vec![false; cells * cells * cells];
    for p in points {
        if let Some(i) = ws.cell_index(p, cells) {
            hit[i] = true;
        }
    }
    hit.iter().filter(|h| **h).count() as f64 / hit.len() as f64
}
