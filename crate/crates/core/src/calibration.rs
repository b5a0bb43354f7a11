//! Camera pose refinement from a rough prior and markers at known world
//! positions.
//!
//! Each marker seen by a camera gives a two-component reprojection residual.
//! A residual vanishes exactly when the camera-to-marker vector is parallel
//! to the back-projected pixel direction, which is the same zero set as the
//! componentwise ratio identity `v_c2m(k) / v_i2c(k) = |v_c2m| / |v_i2c|`.
//! Pixel residuals keep the least-squares problem well scaled.

use alloc::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraModel, Intrinsics, Pose, RotMat, Vec2, Vec3};
use crate::optim::{levenberg_marquardt, LMConfig, OptimError};
use crate::prelude::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("marker id {0} appears more than once")]
    DuplicateMarker(u32),
    #[error("observation references unknown marker {0}")]
    UnknownMarker(u32),
    #[error("camera {camera_id} sees {count} markers, at least 3 are required")]
    TooFewMarkers { camera_id: u32, count: usize },
    #[error("marker {marker_id} is behind the candidate camera")]
    MarkerBehindCamera { marker_id: u32 },
    #[error("refinement did not converge after {iterations} iterations (rms {rms} px)")]
    NotConverged {
        best_pose: Pose,
        rms: f64,
        iterations: usize,
        /// Sum of squared residuals after each iteration.
        residual_history: Vec<f64>,
    },
    #[error(transparent)]
    Optim(#[from] OptimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub id: u32,
    pub position: [f64; 3],
}

impl Marker {
    pub fn new(id: u32, position: Vec3) -> Self {
        Self {
            id,
            position: [position.x, position.y, position.z],
        }
    }

    pub fn world(&self) -> Vec3 {
        Vec3::from(self.position)
    }
}

/// A marker's world position paired with its pixel in one camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub marker_id: u32,
    pub world: Vec3,
    pub pixel: Vec2,
}

/// Known markers and, per camera, where each one was seen.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarkerSet {
    markers: BTreeMap<u32, Vec3>,
    image_points: BTreeMap<u32, Vec<(u32, Vec2)>>,
}

impl MarkerSet {
    pub fn new(markers: &[Marker]) -> Result<Self, CalibrationError> {
        let mut map = BTreeMap::new();
        for m in markers {
            if map.insert(m.id, m.world()).is_some() {
                return Err(CalibrationError::DuplicateMarker(m.id));
            }
        }
        Ok(Self {
            markers: map,
            image_points: BTreeMap::new(),
        })
    }

    pub fn add_observation(&mut self, camera_id: u32, marker_id: u32, pixel: Vec2) -> Result<(), CalibrationError> {
        if !self.markers.contains_key(&marker_id) {
            return Err(CalibrationError::UnknownMarker(marker_id));
        }
        self.image_points.entry(camera_id).or_default().push((marker_id, pixel));
        Ok(())
    }

    pub fn marker_count(&self) -> usize {
        self.markers.len()
    }

    pub fn marker(&self, id: u32) -> Option<Vec3> {
        self.markers.get(&id).copied()
    }

    pub fn camera_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.image_points.keys().copied()
    }

    pub fn correspondences(&self, camera_id: u32) -> Vec<Correspondence> {
        self.image_points
            .get(&camera_id)
            .map(|pts| {
                pts.iter()
                    .map(|(id, pixel)| Correspondence {
                        marker_id: *id,
                        world: self.markers[id],
                        pixel: *pixel,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Rough camera pose from the chessboard stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChessboardPrior {
    pub prior_pose: Pose,
    /// mm
    pub position_uncertainty: f64,
    /// rad
    pub orientation_uncertainty: f64,
}

impl ChessboardPrior {
    pub fn exact(pose: Pose) -> Self {
        Self {
            prior_pose: pose,
            position_uncertainty: 0.0,
            orientation_uncertainty: 0.0,
        }
    }

    /// Displaces `truth` by exactly `position_error` mm in a random direction
    /// and rotates it by exactly `orientation_error` rad about a random axis.
    pub fn perturbed<R: Rng + ?Sized>(truth: &Pose, position_error: f64, orientation_error: f64, rng: &mut R) -> Self {
        let dir = random_unit(rng);
        let axis = random_unit(rng);
        let rot = RotMat::from_axis_angle(axis, orientation_error);
        Self {
            prior_pose: Pose::new(truth.position + dir * position_error, rot.compose(&truth.orientation)),
            position_uncertainty: position_error,
            orientation_uncertainty: orientation_error,
        }
    }
}

pub(crate) fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        if let Some(u) = v.try_normalize(1e-9) {
            return u;
        }
    }
}

/// Reprojection residuals `p_i - project(candidate, p_w)` for every
/// correspondence, two entries per marker.
///
/// `candidate` is the camera pose `(x, y, z, alpha, beta, gamma)` in the world.
pub fn marker_residuals(
    candidate: &[f64; 6],
    intrinsics: &Intrinsics,
    correspondences: &[Correspondence],
) -> Result<Vec<f64>, CalibrationError> {
    let cam = CameraModel::new(Pose::from_params(candidate), *intrinsics);
    let mut out = Vec::with_capacity(2 * correspondences.len());
    for c in correspondences {
        let p = cam
            .project(&c.world)
            .map_err(|_| CalibrationError::MarkerBehindCamera { marker_id: c.marker_id })?;
        out.push(c.pixel.x - p.x);
        out.push(c.pixel.y - p.y);
    }
    Ok(out)
}

/// Root-mean-square reprojection distance in pixels.
pub fn reprojection_rms(pose: &Pose, intrinsics: &Intrinsics, correspondences: &[Correspondence]) -> Result<f64, CalibrationError> {
    let r = marker_residuals(&pose.to_params(), intrinsics, correspondences)?;
    let ssq: f64 = r.iter().map(|v| v * v).sum();
    Ok((ssq / correspondences.len().max(1) as f64).sqrt())
}

/// Outcome of [`refine_camera_pose`].
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub pose: Pose,
    pub initial_rms: f64,
    pub final_rms: f64,
    pub iterations: usize,
}

/// Refines one camera's pose from its prior with Levenberg-Marquardt.
pub fn refine_camera_pose(
    camera_id: u32,
    prior: &ChessboardPrior,
    intrinsics: &Intrinsics,
    markers: &MarkerSet,
    cfg: &LMConfig,
) -> Result<Refinement, CalibrationError> {
    let corr = markers.correspondences(camera_id);
    if corr.len() < 3 {
        return Err(CalibrationError::TooFewMarkers {
            camera_id,
            count: corr.len(),
        });
    }
    let x0 = prior.prior_pose.to_params();
    let initial_rms = reprojection_rms(&prior.prior_pose, intrinsics, &corr)?;

    let residual_fn = |x: &[f64]| {
        let p: [f64; 6] = x.try_into().ok()?;
        marker_residuals(&p, intrinsics, &corr).ok()
    };
    let res = levenberg_marquardt(residual_fn, &x0, cfg)?;
    let p: [f64; 6] = res.solution.as_slice().try_into().expect("six parameters");
    let pose = Pose::from_params(&p);
    let final_rms = (res.final_objective / corr.len() as f64).sqrt();
    if !res.converged {
        return Err(CalibrationError::NotConverged {
            best_pose: pose,
            rms: final_rms,
            iterations: res.iterations,
            residual_history: res.trace,
        });
    }
    Ok(Refinement {
        pose,
        initial_rms,
        final_rms,
        iterations: res.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::scene::SceneConfig;

    fn axis_camera() -> (Intrinsics, Pose) {
        let intr = Intrinsics {
            focal_length: 500.0,
            principal_point: [320.0, 240.0],
            image_size: [640, 480],
        };
        (intr, Pose::identity())
    }

    #[test]
    fn zero_residual_at_truth_and_length() {
        let scene = SceneConfig::default();
        let cams = scene.cameras().unwrap();
        let set = scene.observe_markers(&cams, 0.0, &mut rng_from_seed(1)).unwrap();
        for (id, cam) in cams.iter().enumerate() {
            let corr = set.correspondences(id as u32);
            assert_eq!(corr.len(), 16);
            let r = marker_residuals(&cam.pose.to_params(), &cam.intrinsics, &corr).unwrap();
            assert_eq!(r.len(), 32);
            assert!(r.iter().all(|v| v.abs() < 1e-9), "{r:?}");
        }
    }

    #[test]
    fn lateral_offset_shifts_residual() {
        let (intr, _) = axis_camera();
        let corr = [Correspondence {
            marker_id: 0,
            world: Vec3::new(0.0, 0.0, 1000.0),
            pixel: Vec2::new(320.0, 240.0),
        }];
        let r = marker_residuals(&[10.0, 0.0, 0.0, 0.0, 0.0, 0.0], &intr, &corr).unwrap();
        // Moving the camera +10 mm in x moves the marker -10 mm in the camera frame.
        assert!((r[0] - 5.0).abs() < 1e-12 && r[1].abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn behind_camera_is_flagged() {
        let (intr, _) = axis_camera();
        let corr = [Correspondence {
            marker_id: 7,
            world: Vec3::new(0.0, 0.0, -10.0),
            pixel: Vec2::new(0.0, 0.0),
        }];
        assert_eq!(
            marker_residuals(&[0.0; 6], &intr, &corr).unwrap_err(),
            CalibrationError::MarkerBehindCamera { marker_id: 7 }
        );
    }

    #[test]
    fn marker_set_validation() {
        let m = [Marker::new(1, Vec3::zeros()), Marker::new(1, Vec3::x())];
        assert_eq!(MarkerSet::new(&m).unwrap_err(), CalibrationError::DuplicateMarker(1));
        let mut set = MarkerSet::new(&m[..1]).unwrap();
        assert_eq!(
            set.add_observation(0, 9, Vec2::zeros()).unwrap_err(),
            CalibrationError::UnknownMarker(9)
        );
        set.add_observation(0, 1, Vec2::zeros()).unwrap();
        let err = refine_camera_pose(0, &ChessboardPrior::exact(Pose::identity()), &axis_camera().0, &set, &LMConfig::default());
        assert_eq!(err.unwrap_err(), CalibrationError::TooFewMarkers { camera_id: 0, count: 1 });
    }

    #[test]
    fn exact_prior_is_kept() {
        let scene = SceneConfig::default();
        let cams = scene.cameras().unwrap();
        let set = scene.observe_markers(&cams, 0.0, &mut rng_from_seed(2)).unwrap();
        let out = refine_camera_pose(0, &ChessboardPrior::exact(cams[0].pose), &cams[0].intrinsics, &set, &LMConfig::default()).unwrap();
        assert!((out.pose.position - cams[0].pose.position).norm() < 1e-9);
        assert!(out.final_rms <= out.initial_rms);
    }

    #[test]
    fn perturbed_prior_recovers_truth() {
        let scene = SceneConfig::default();
        let cams = scene.cameras().unwrap();
        let mut rng = rng_from_seed(3);
        let set = scene.observe_markers(&cams, 0.0, &mut rng).unwrap();
        for (id, cam) in cams.iter().enumerate() {
            let prior = ChessboardPrior::perturbed(&cam.pose, 40.0, 5f64.to_radians(), &mut rng);
            assert!(((prior.prior_pose.position - cam.pose.position).norm() - 40.0).abs() < 1e-9);
            let out = refine_camera_pose(id as u32, &prior, &cam.intrinsics, &set, &LMConfig::default()).unwrap();
            assert!((out.pose.position - cam.pose.position).norm() < 1e-6);
            assert!(out.pose.orientation.angle_to(&cam.pose.orientation) < 1e-8);
            assert!(out.final_rms <= out.initial_rms);
        }
    }

    #[test]
    fn ratio_identity_and_residual_share_zero_set() {
        let scene = SceneConfig::default();
        let cams = scene.cameras().unwrap();
        let set = scene.observe_markers(&cams, 0.0, &mut rng_from_seed(4)).unwrap();
        let cam = cams[1];
        let ratio_violation = |pose: &Pose| {
            let model = CameraModel::new(*pose, cam.intrinsics);
            set.correspondences(1)
                .iter()
                .map(|c| {
                    let v_c2m = c.world - pose.position;
                    let v_i2c = model.pixel_direction(&c.pixel);
                    let k = v_c2m.norm() / v_i2c.norm();
                    (v_c2m - v_i2c * k).norm()
                })
                .fold(0.0, f64::max)
        };
        assert!(ratio_violation(&cam.pose) < 1e-9);
        let mut shifted = cam.pose;
        shifted.position.x += 0.5;
        assert!(ratio_violation(&shifted) > 1e-3);
        assert!(reprojection_rms(&shifted, &cam.intrinsics, &set.correspondences(1)).unwrap() > 1e-3);
    }
}
