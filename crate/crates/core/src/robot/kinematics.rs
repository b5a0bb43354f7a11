//! A seven-joint RAVEN-like arm: two intersecting revolute shoulder axes, a
//! prismatic insertion along the tool shaft, a two-axis wrist carrying a short
//! distal link, and two jaw joints that do not move the tool point.
//!
//! With `theta = THETA0 + q2` the shaft direction is
//! `u = (sin theta cos q1, sin theta sin q1, -cos theta)` and the tool point is
//! `(SHAFT + q3) u + WRIST d`, where `d` tilts `u` by `q5` toward the in-plane
//! direction selected by `q4`.

use nalgebra::Matrix3;

use super::RobotError;
use crate::geometry::Vec3;
use crate::prelude::*;

pub const JOINTS: usize = 7;
/// Shaft elevation at `q2 = 0`, rad.
pub const THETA0: f64 = 0.35;
/// Remote-center-to-wrist distance at `q3 = 0`, mm.
pub const SHAFT: f64 = 300.0;
/// Wrist-to-tool-point distance, mm.
pub const WRIST: f64 = 10.0;

/// Lower and upper joint limits (rad, insertion in mm).
pub const JOINT_LIMITS: [(f64, f64); JOINTS] = [
    (-1.2, 1.2),
    (-0.3, 0.6),
    (-150.0, 150.0),
    (-core::f64::consts::PI, core::f64::consts::PI),
    (-1.2, 1.2),
    (-1.3, 1.3),
    (-1.3, 1.3),
];

pub type Joints = [f64; JOINTS];

pub fn check_limits(q: &Joints) -> Result<(), RobotError> {
    for (i, (v, (lo, hi))) in q.iter().zip(JOINT_LIMITS.iter()).enumerate() {
        if !(v >= lo && v <= hi) {
            return Err(RobotError::JointLimit { joint: i, value: *v });
        }
    }
    Ok(())
}

/// Shaft direction and the two unit vectors spanning the wrist plane.
fn shaft_frame(q1: f64, q2: f64) -> (Vec3, Vec3, Vec3) {
    let theta = THETA0 + q2;
    let (st, ct) = theta.sin_cos();
    let (s1, c1) = q1.sin_cos();
    let u = Vec3::new(st * c1, st * s1, -ct);
    let xt = Vec3::new(ct * c1, ct * s1, st);
    let yt = u.cross(&xt);
    (u, xt, yt)
}

pub(crate) fn unchecked_fk(q: &Joints) -> (Vec3, Matrix3<f64>) {
    let (u, xt, yt) = shaft_frame(q[0], q[1]);
    let (s4, c4) = q[3].sin_cos();
    let (s5, c5) = q[4].sin_cos();
    let w = xt * c4 + yt * s4;
    let d = u * c5 + w * s5;
    let e1 = w * c5 - u * s5;
    let e2 = d.cross(&e1);
    let p = u * (SHAFT + q[2]) + d * WRIST;
    (p, Matrix3::from_columns(&[e1, e2, d]))
}

/// Tool-point position, mm.
pub fn forward_kinematics(q: &Joints) -> Result<Vec3, RobotError> {
    check_limits(q)?;
    Ok(unchecked_fk(q).0)
}

/// Tool-point position and tool orientation (columns: tool x, y, z axes).
pub fn forward_pose(q: &Joints) -> Result<(Vec3, Matrix3<f64>), RobotError> {
    check_limits(q)?;
    Ok(unchecked_fk(q))
}

/// Central-difference position Jacobian, 3 x 7.
pub fn position_jacobian(q: &Joints) -> [Vec3; JOINTS] {
    let mut cols = [Vec3::zeros(); JOINTS];
    for (i, col) in cols.iter_mut().enumerate() {
        let h = if i == 2 { 1e-4 } else { 1e-6 };
        let (mut a, mut b) = (*q, *q);
        a[i] += h;
        b[i] -= h;
        *col = (unchecked_fk(&a).0 - unchecked_fk(&b).0) / (2.0 * h);
    }
    cols
}

/// Joints that put the tool point at `p` with the given wrist angles and
/// jaws, or `None` if that needs joints outside the limits.
pub fn inverse_kinematics(p: &Vec3, q4: f64, q5: f64, jaws: [f64; 2]) -> Option<Joints> {
    let mut u = p.try_normalize(1e-9)?;
    let mut q = [0.0; JOINTS];
    // the wrist offset depends on the shaft direction; iterate to a fixed point
    for _ in 0..50 {
        let q1 = u.y.atan2(u.x);
        let theta = (-u.z).clamp(-1.0, 1.0).acos();
        let (u_new, xt, yt) = shaft_frame(q1, theta - THETA0);
        let (s4, c4) = q4.sin_cos();
        let (s5, c5) = q5.sin_cos();
        let d = u_new * c5 + (xt * c4 + yt * s4) * s5;
        let shaft = p - d * WRIST;
        q = [q1, theta - THETA0, shaft.norm() - SHAFT, q4, q5, jaws[0], jaws[1]];
        let next = shaft.normalize();
        if (next - u).norm() < 1e-14 {
            break;
        }
        u = next;
    }
    check_limits(&q).ok()?;
    ((unchecked_fk(&q).0 - p).norm() < 1e-9).then_some(q)
}

/// Home position: all joints zero.
pub fn home_position() -> Vec3 {
    unchecked_fk(&[0.0; JOINTS]).0
}
