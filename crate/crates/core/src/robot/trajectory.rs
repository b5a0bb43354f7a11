use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kinematics::{inverse_kinematics, Joints, JOINTS, JOINT_LIMITS};
use super::RobotError;
use crate::prelude::*;
use crate::rng::{stage_rng, Rng as SeededRng};
use crate::scene::WorkspaceBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub time: f64,
    pub joints: Joints,
}

/// Joint-space waypoints joined by minimum-jerk quintic segments that start
/// and end at rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: u32,
    pub waypoints: Vec<Waypoint>,
}

/// Position, velocity and acceleration of every joint at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    pub q: Joints,
    pub qd: Joints,
    pub qdd: Joints,
}

impl Trajectory {
    pub fn new(id: u32, waypoints: Vec<Waypoint>) -> Result<Self, RobotError> {
        if waypoints.len() < 2 {
            return Err(RobotError::InvalidTrajectory("need at least two waypoints"));
        }
        if waypoints.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return Err(RobotError::InvalidTrajectory("waypoint times must increase"));
        }
        for w in &waypoints {
            super::kinematics::check_limits(&w.joints)?;
        }
        Ok(Self { id, waypoints })
    }

    pub fn start_time(&self) -> f64 {
        self.waypoints[0].time
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].time
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    /// State at `t`, clamped to the trajectory's time span.
    pub fn sample(&self, t: f64) -> JointState {
        let t = t.clamp(self.start_time(), self.end_time());
        // segments are few, a linear scan from the front is cheap enough
        let k = self
            .waypoints
            .windows(2)
            .position(|w| t <= w[1].time)
            .unwrap_or(self.waypoints.len() - 2);
        let (a, b) = (&self.waypoints[k], &self.waypoints[k + 1]);
        let span = b.time - a.time;
        let s = (t - a.time) / span;
        let (s2, s3) = (s * s, s * s * s);
        let pos = 10.0 * s3 - 15.0 * s3 * s + 6.0 * s3 * s2;
        let vel = (30.0 * s2 - 60.0 * s3 + 30.0 * s2 * s2) / span;
        let acc = (60.0 * s - 180.0 * s2 + 120.0 * s3) / (span * span);
        let mut out = JointState {
            q: [0.0; JOINTS],
            qd: [0.0; JOINTS],
            qdd: [0.0; JOINTS],
        };
        for i in 0..JOINTS {
            let dq = b.joints[i] - a.joints[i];
            out.q[i] = a.joints[i] + dq * pos;
            out.qd[i] = dq * vel;
            out.qdd[i] = dq * acc;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub workspace: WorkspaceBox,
    /// Segment durations are drawn uniformly from this range, s.
    pub segment_min: f64,
    pub segment_max: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            workspace: WorkspaceBox::default(),
            segment_min: 1.5,
            segment_max: 4.0,
        }
    }
}

fn random_waypoint<R: Rng + ?Sized>(ws: &WorkspaceBox, rng: &mut R) -> Joints {
    loop {
        let p = ws.sample(rng);
        let q4 = rng.random_range(-2.5..2.5);
        let q5 = rng.random_range(-0.8..0.8);
        let jaws = [rng.random_range(-0.5..1.0), rng.random_range(-0.5..1.0)];
        if let Some(q) = inverse_kinematics(&p, q4, q5, jaws) {
            return q;
        }
    }
}

/// `count` random-waypoint trajectories of `duration` seconds each. Waypoint
/// tool positions are uniform in the workspace box; trajectory `i` draws
/// from its own stream derived from `seed`, so the set is reproducible.
pub fn generate_teleop_trajectories(
    count: usize,
    duration: f64,
    seed: u64,
    cfg: &TrajectoryConfig,
) -> Result<Vec<Trajectory>, RobotError> {
    if !(duration > 0.0 && cfg.segment_min > 0.0 && cfg.segment_max >= cfg.segment_min) {
        return Err(RobotError::InvalidTrajectory("duration and segment range must be positive"));
    }
    (0..count)
        .map(|i| {
            let mut rng: SeededRng = stage_rng(seed, &alloc::format!("trajectory/{i}"));
            let mut waypoints = vec![Waypoint {
                time: 0.0,
                joints: random_waypoint(&cfg.workspace, &mut rng),
            }];
            let mut t = 0.0;
            while t < duration {
                let mut step = rng.random_range(cfg.segment_min..=cfg.segment_max);
                // never leave a sliver shorter than the minimum at the end
                if duration - (t + step) < cfg.segment_min {
                    step = duration - t;
                }
                t += step;
                waypoints.push(Waypoint {
                    time: t,
                    joints: random_waypoint(&cfg.workspace, &mut rng),
                });
            }
            Trajectory::new(i as u32, waypoints)
        })
        .collect()
}

/// Joint limits are respected everywhere along a trajectory when they hold
/// at the waypoints, because each segment moves monotonically between them.
pub fn within_limits(traj: &Trajectory) -> bool {
    traj.waypoints.iter().all(|w| {
        w.joints
            .iter()
            .zip(JOINT_LIMITS.iter())
            .all(|(v, (lo, hi))| v >= lo && v <= hi)
    })
}
