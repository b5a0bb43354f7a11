//! Synthetic measurement rig: four cameras around the robot workspace and
//! sixteen calibration markers at eight ground locations.

use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationError, Marker, MarkerSet};
use crate::effector::{rig_forward, BallCenters, MarkerRigSpec};
use crate::geometry::{CameraModel, GeometryError, Intrinsics, Pose, RotMat, Vec2, Vec3};
use crate::image::oracle_circles;
use crate::prelude::*;

/// A rotation drawn uniformly (normalized Gaussian quaternion).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> RotMat {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let q = nalgebra::Quaternion::new(n.sample(rng), n.sample(rng), n.sample(rng), n.sample(rng));
        if q.norm() > 1e-6 {
            let m = nalgebra::UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
            return RotMat::from_matrix_unchecked(m);
        }
    }
}

/// Axis-aligned box in world millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl WorkspaceBox {
    pub fn center(&self) -> Vec3 {
        (Vec3::from(self.min) + Vec3::from(self.max)) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        Vec3::from(self.max) - Vec3::from(self.min)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        Vec3::new(
            rng.random_range(self.min[0]..=self.max[0]),
            rng.random_range(self.min[1]..=self.max[1]),
            rng.random_range(self.min[2]..=self.max[2]),
        )
    }

    /// Index of the `cells^3` occupancy-grid cell holding `p`, if inside.
    pub fn cell_index(&self, p: &Vec3, cells: usize) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let ext = self.extent();
        let mut idx = 0;
        for i in 0..3 {
            let t = (p[i] - self.min[i]) / ext[i];
            let c = ((t * cells as f64) as usize).min(cells - 1);
            idx = idx * cells + c;
        }
        Some(idx)
    }
}

impl Default for WorkspaceBox {
    fn default() -> Self {
        Self {
            min: [50.0, -60.0, -360.0],
            max: [170.0, 60.0, -240.0],
        }
    }
}

/// Geometry of the synthetic camera rig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub workspace: WorkspaceBox,
    pub intrinsics: Intrinsics,
    /// Distance from each camera to the workspace center, mm.
    pub camera_distance: f64,
    /// Camera height above the workspace center, as an elevation angle (deg).
    pub camera_elevation_deg: f64,
    /// Camera azimuths around the vertical axis (deg).
    pub camera_azimuths_deg: Vec<f64>,
    /// Horizontal distance of the marker posts from the workspace center, mm.
    pub marker_ring_radius: f64,
    /// Heights of the two markers on each post, relative to the workspace center.
    pub marker_heights: [f64; 2],
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            workspace: WorkspaceBox::default(),
            intrinsics: Intrinsics {
                focal_length: 400.0,
                principal_point: [320.0, 240.0],
                image_size: [640, 480],
            },
            camera_distance: 600.0,
            camera_elevation_deg: 25.0,
            camera_azimuths_deg: vec![45.0, 135.0, 225.0, 315.0],
            marker_ring_radius: 350.0,
            marker_heights: [-90.0, 60.0],
        }
    }
}

impl SceneConfig {
    /// Cameras looking at the workspace center, in azimuth order.
    pub fn cameras(&self) -> Result<Vec<CameraModel>, GeometryError> {
        let target = self.workspace.center();
        let el = self.camera_elevation_deg.to_radians();
        self.camera_azimuths_deg
            .iter()
            .map(|az_deg| {
                let az = az_deg.to_radians();
                let offset = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * self.camera_distance;
                let pose = CameraModel::look_at(target + offset, target, Vec3::z())?;
                Ok(CameraModel::new(pose, self.intrinsics))
            })
            .collect()
    }

    /// Sixteen markers: two heights on each of eight posts, every other post
    /// on a camera diagonal.
    pub fn markers(&self) -> Vec<Marker> {
        let c = self.workspace.center();
        let mut out = Vec::with_capacity(16);
        for k in 0..8 {
            let a = k as f64 * PI / 4.0;
            // alternate post distance so the markers are not all concyclic
            let r = self.marker_ring_radius * if k % 2 == 0 { 1.0 } else { 0.8 };
            for (h, height) in self.marker_heights.iter().enumerate() {
                let p = c + Vec3::new(r * a.cos(), r * a.sin(), *height);
                out.push(Marker::new((2 * k + h) as u32, p));
            }
        }
        out
    }

    /// Projects every marker into every camera, adding isotropic Gaussian
    /// pixel noise with standard deviation `pixel_noise`. Camera ids are the
    /// camera indices.
    pub fn observe_markers<R: Rng + ?Sized>(
        &self,
        cameras: &[CameraModel],
        pixel_noise: f64,
        rng: &mut R,
    ) -> Result<MarkerSet, CalibrationError> {
        let markers = self.markers();
        let mut set = MarkerSet::new(&markers)?;
        let noise = Normal::new(0.0, pixel_noise.max(0.0)).expect("finite sigma");
        for (cam_id, cam) in cameras.iter().enumerate() {
            for m in &markers {
                let p = cam
                    .project(&m.world())
                    .map_err(|_| CalibrationError::MarkerBehindCamera { marker_id: m.id })?;
                let noisy = if pixel_noise > 0.0 {
                    p + Vec2::new(noise.sample(rng), noise.sample(rng))
                } else {
                    p
                };
                set.add_observation(cam_id as u32, m.id, noisy)?;
            }
        }
        Ok(set)
    }
}

impl SceneConfig {
    /// Rig pose with its origin uniform in the workspace and a uniform
    /// orientation.
    pub fn random_rig_pose<R: Rng + ?Sized>(&self, rng: &mut R) -> Pose {
        let p = self.workspace.sample(rng);
        Pose::new(p, random_rotation(rng))
    }

    /// Draws rig poses until all three balls are fully inside every image and
    /// no ball is more than `max_occlusion` hidden in any view.
    pub fn sample_visible_rig<R: Rng + ?Sized>(
        &self,
        cameras: &[CameraModel],
        rig: &MarkerRigSpec,
        max_occlusion: f64,
        rng: &mut R,
    ) -> (Pose, BallCenters) {
        loop {
            let pose = self.random_rig_pose(rng);
            let balls = rig_forward(&pose, rig);
            if rig_visible(cameras, &balls, rig, max_occlusion) {
                return (pose, balls);
            }
        }
    }

    /// A continuous rig motion of `frames` poses: visible keyframes
    /// `path.key_interval` frames apart, each within `path.max_step` mm and
    /// `path.max_turn` rad of the previous one, joined by linear translation
    /// and constant-axis rotation. Every frame satisfies the same visibility
    /// rule as [`SceneConfig::sample_visible_rig`].
    pub fn smooth_rig_path<R: Rng + ?Sized>(
        &self,
        cameras: &[CameraModel],
        rig: &MarkerRigSpec,
        max_occlusion: f64,
        path: &RigPathConfig,
        frames: usize,
        rng: &mut R,
    ) -> Vec<(Pose, BallCenters)> {
        let mut out = Vec::with_capacity(frames);
        if frames == 0 {
            return out;
        }
        out.push(self.sample_visible_rig(cameras, rig, max_occlusion, rng));
        let key = path.key_interval.max(1);
        let n = Normal::new(0.0, 1.0).expect("unit normal");
        while out.len() < frames {
            let start = out[out.len() - 1].0;
            let steps = key.min(frames - out.len());
            let segment = loop {
                let dir = Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
                let axis = Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
                if dir.norm() < 1e-9 || axis.norm() < 1e-9 {
                    continue;
                }
                let mut end = start.position + dir.normalize() * rng.random_range(0.0..=path.max_step);
                for k in 0..3 {
                    end[k] = end[k].clamp(self.workspace.min[k], self.workspace.max[k]);
                }
                let turn = rng.random_range(0.0..=path.max_turn);
                let seg: Vec<(Pose, BallCenters)> = (1..=steps)
                    .map(|i| {
                        let s = i as f64 / key as f64;
                        let r = start.orientation.compose(&RotMat::from_axis_angle(axis, turn * s));
                        let pose = Pose::new(start.position + (end - start.position) * s, r);
                        let balls = rig_forward(&pose, rig);
                        (pose, balls)
                    })
                    .collect();
                if seg.iter().all(|(_, b)| rig_visible(cameras, b, rig, max_occlusion)) {
                    break seg;
                }
            };
            out.extend(segment);
        }
        out
    }
}

/// Motion limits for [`SceneConfig::smooth_rig_path`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigPathConfig {
    pub key_interval: usize,
    /// Largest translation between keyframes, mm.
    pub max_step: f64,
    /// Largest rotation between keyframes, rad.
    pub max_turn: f64,
}

impl Default for RigPathConfig {
    fn default() -> Self {
        Self {
            key_interval: 15,
            max_step: 40.0,
            max_turn: 0.4,
        }
    }
}

/// All three balls fully inside every image, none more than `max_occlusion`
/// hidden.
pub fn rig_visible(cameras: &[CameraModel], balls: &BallCenters, rig: &MarkerRigSpec, max_occlusion: f64) -> bool {
    cameras.iter().all(|cam| {
        let (circles, partial) = oracle_circles(cam, balls, rig.ball_radius);
        let [w, h] = cam.intrinsics.image_size;
        !partial
            && circles.iter().all(|c| {
                c.occluded_fraction <= max_occlusion
                    && c.center[0] - c.radius >= 2.0
                    && c.center[1] - c.radius >= 2.0
                    && c.center[0] + c.radius <= f64::from(w) - 3.0
                    && c.center[1] + c.radius <= f64::from(h) - 3.0
            })
    })
}
