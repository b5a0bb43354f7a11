//! Per-view circle status, search bounds from history, and ray
//! triangulation of ball centers.
//!
//! Each (camera, color) pair carries a [`CircleTrack`]. An effective circle
//! is suspended when it disappears, fails the color check or jumps further
//! than the motion threshold. A suspended circle comes back only after its
//! detection has been present, color-checked and consistent with the 3D ball
//! center for more than `reinstate_frames` frames in a row. Only effective
//! circles are triangulated; with fewer than two the tracker skips a few
//! frames and restarts with wider search bounds.

use serde::{Deserialize, Serialize};

use crate::effector::{solve_effector_pose, BallCenters, EffectorPose, MarkerRigSpec};
use crate::geometry::{CameraModel, Ray, Vec2, Vec3};
use crate::image::{detect_ball_cached, BallColor, DetectedCircle, DetectorConfig, EdgeCache, HoughParams, RasterImage};
use crate::optim::NMConfig;
use crate::prelude::*;

/// Minimum `|sin|` of the angle between two rays for triangulation.
pub const PARALLEL_SIN_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrackingError {
    #[error("rays are parallel to within |sin| {sin_angle:e}")]
    DegenerateRays { sin_angle: f64 },
    /// Fewer than two effective circles; skip `skip_frames` and restart with
    /// search bounds widened by `tolerance_factor`.
    #[error("{color:?} seen by {effective} effective circle(s); skip {skip_frames} frames and restart")]
    LocalizationUnavailable {
        color: BallColor,
        effective: usize,
        skip_frames: u32,
        tolerance_factor: f64,
    },
    #[error("no camera with id {0}")]
    UnknownCamera(u32),
    #[error("invalid tracker config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Effective,
    Suspended,
}

impl TrackStatus {
    pub fn name(self) -> &'static str {
        match self {
            TrackStatus::Effective => "effective",
            TrackStatus::Suspended => "suspended",
        }
    }
}

/// History of one color in one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleTrack {
    pub camera_id: u32,
    pub color: BallColor,
    pub status: TrackStatus,
    pub last_center: Option<[f64; 2]>,
    pub last_radius: Option<f64>,
    pub consecutive_good_frames: u32,
}

impl CircleTrack {
    /// Fresh tracks start effective: with no history there is nothing to
    /// distrust, and reinstatement needs other effective views anyway.
    pub fn new(camera_id: u32, color: BallColor) -> Self {
        Self {
            camera_id,
            color,
            status: TrackStatus::Effective,
            last_center: None,
            last_radius: None,
            consecutive_good_frames: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Largest accepted center jump, px per frame.
    pub motion_threshold: f64,
    /// A suspended circle needs strictly more good frames than this.
    pub reinstate_frames: u32,
    /// Relative radius search window around the last radius.
    pub radius_window: f64,
    /// `d_min` as a share of the smallest distance between last centers.
    pub d_min_factor: f64,
    /// Largest ray-to-ball-center distance counted as consistent, mm.
    pub consistency_threshold: f64,
    pub restart_skip: u32,
    /// Window multiplier per restart.
    pub tolerance_growth: f64,
    /// Bounds used without history.
    pub global_r_min: f64,
    pub global_r_max: f64,
    pub global_d_min: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            motion_threshold: 25.0,
            reinstate_frames: 5,
            radius_window: 0.3,
            d_min_factor: 0.5,
            consistency_threshold: 10.0,
            restart_skip: 3,
            tolerance_growth: 1.5,
            global_r_min: 8.0,
            global_r_max: 22.0,
            global_d_min: 20.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackingError> {
        let positive = [
            self.motion_threshold,
            self.radius_window,
            self.d_min_factor,
            self.consistency_threshold,
            self.global_r_min,
            self.global_d_min,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(TrackingError::InvalidConfig("thresholds and windows must be positive"));
        }
        if self.reinstate_frames < 1 || self.restart_skip < 1 {
            return Err(TrackingError::InvalidConfig("reinstate_frames and restart_skip must be >= 1"));
        }
        if !(self.tolerance_growth >= 1.0) {
            return Err(TrackingError::InvalidConfig("tolerance_growth must be >= 1"));
        }
        if !(self.global_r_max > self.global_r_min) {
            return Err(TrackingError::InvalidConfig("global_r_max must exceed global_r_min"));
        }
        Ok(())
    }
}

/// One frame's transition of the effective/suspended machine.
///
/// `consistency_mm` is the distance from this view's back-projected ray to
/// the ball center reconstructed from the other views, when available.
pub fn update_track(
    track: &CircleTrack,
    detection: Option<&DetectedCircle>,
    color_ok: bool,
    consistency_mm: Option<f64>,
    cfg: &TrackerConfig,
) -> CircleTrack {
    let mut next = track.clone();
    if let Some(d) = detection {
        next.last_center = Some(d.center);
        next.last_radius = Some(d.radius);
    }
    match track.status {
        TrackStatus::Effective => {
            let moved = match (detection, track.last_center) {
                (Some(d), Some(c)) => (d.center[0] - c[0]).hypot(d.center[1] - c[1]) > cfg.motion_threshold,
                _ => false,
            };
            if detection.is_none() || !color_ok || moved {
                next.status = TrackStatus::Suspended;
                next.consecutive_good_frames = 0;
            } else {
                next.consecutive_good_frames = track.consecutive_good_frames.saturating_add(1);
            }
        }
        TrackStatus::Suspended => {
            let consistent = consistency_mm.is_some_and(|c| c <= cfg.consistency_threshold);
            if detection.is_some() && color_ok && consistent {
                next.consecutive_good_frames = track.consecutive_good_frames.saturating_add(1);
                if next.consecutive_good_frames > cfg.reinstate_frames {
                    next.status = TrackStatus::Effective;
                }
            } else {
                next.consecutive_good_frames = 0;
            }
        }
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub d_min: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl SearchBounds {
    pub fn apply(&self, base: &HoughParams) -> HoughParams {
        HoughParams {
            d_min: self.d_min,
            r_min: self.r_min,
            r_max: self.r_max,
            ..base.clone()
        }
    }
}

/// Hough bounds from the last detection: radius within
/// `last * (1 -+ radius_window * tolerance_factor)` and `d_min` a share of
/// the closest pair among `frame_centers` (this camera's last centers).
/// Without a last radius the global bounds apply.
pub fn bound_search_params(
    track: &CircleTrack,
    frame_centers: &[[f64; 2]],
    tolerance_factor: f64,
    cfg: &TrackerConfig,
) -> SearchBounds {
    let mut min_pair = f64::INFINITY;
    for (i, a) in frame_centers.iter().enumerate() {
        for b in &frame_centers[i + 1..] {
            min_pair = min_pair.min((a[0] - b[0]).hypot(a[1] - b[1]));
        }
    }
    let d_min = if min_pair.is_finite() {
        (cfg.d_min_factor * min_pair).max(1.0)
    } else {
        cfg.global_d_min
    };
    match track.last_radius {
        Some(r) => {
            // keep r_min positive however wide the window grows
            let w = (cfg.radius_window * tolerance_factor).min(0.9);
            SearchBounds {
                d_min,
                r_min: (r * (1.0 - w)).max(1.0),
                r_max: r * (1.0 + w),
            }
        }
        None => SearchBounds {
            d_min,
            r_min: cfg.global_r_min,
            r_max: cfg.global_r_max,
        },
    }
}

/// Midpoint of the common perpendicular of the lines carrying two rays.
pub fn triangulate_pair(r1: &Ray, r2: &Ray) -> Result<Vec3, TrackingError> {
    let (d1, d2) = (r1.direction, r2.direction);
    let sin_angle = d1.cross(&d2).norm() / (d1.norm() * d2.norm());
    if !(sin_angle > PARALLEL_SIN_THRESHOLD) {
        return Err(TrackingError::DegenerateRays { sin_angle });
    }
    let w0 = r1.origin - r2.origin;
    let (a, b, c) = (d1.dot(&d1), d1.dot(&d2), d2.dot(&d2));
    let (d, e) = (d1.dot(&w0), d2.dot(&w0));
    let denom = a * c - b * b;
    let s = (b * e - c * d) / denom;
    let t = (a * e - b * d) / denom;
    Ok((r1.point_at(s) + r2.point_at(t)) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriangulationMode {
    /// Mean of the pairwise common-perpendicular midpoints.
    #[default]
    PairwiseMean,
    /// Point minimizing the summed squared distance to all rays.
    LeastSquares,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallEstimate {
    pub color: BallColor,
    pub center: [f64; 3],
    pub contributing_cameras: Vec<u32>,
    pub pair_count: usize,
}

impl BallEstimate {
    pub fn center(&self) -> Vec3 {
        Vec3::from(self.center)
    }
}

/// Ball center from circles `(camera_id, pixel center)` in at least two views.
pub fn triangulate_ball(
    color: BallColor,
    observations: &[(u32, Vec2)],
    cams: &[CameraModel],
    mode: TriangulationMode,
) -> Result<BallEstimate, TrackingError> {
    let mut rays = Vec::with_capacity(observations.len());
    for (id, px) in observations {
        let cam = cams.get(*id as usize).ok_or(TrackingError::UnknownCamera(*id))?;
        rays.push(cam.backproject(px));
    }
    let n = rays.len();
    if n < 2 {
        return Err(TrackingError::LocalizationUnavailable {
            color,
            effective: n,
            skip_frames: 0,
            tolerance_factor: 1.0,
        });
    }
    let pair_count = n * (n - 1) / 2;
    let center = match mode {
        TriangulationMode::PairwiseMean => {
            let mut sum = Vec3::zeros();
            for i in 0..n {
                for j in i + 1..n {
                    sum += triangulate_pair(&rays[i], &rays[j])?;
                }
            }
            sum / pair_count as f64
        }
        TriangulationMode::LeastSquares => {
            let mut a = nalgebra::Matrix3::zeros();
            let mut b = Vec3::zeros();
            for r in &rays {
                let p = nalgebra::Matrix3::identity() - r.direction * r.direction.transpose();
                a += p;
                b += p * r.origin;
            }
            a.lu().solve(&b).ok_or(TrackingError::DegenerateRays { sin_angle: 0.0 })?
        }
    };
    Ok(BallEstimate {
        color,
        center: center.into(),
        contributing_cameras: observations.iter().map(|o| o.0).collect(),
        pair_count,
    })
}

/// What happened to one (camera, color) pair in a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewDetection {
    pub camera_id: u32,
    pub color: BallColor,
    pub circle: Option<DetectedCircle>,
    pub color_ok: bool,
    /// Status after this frame's update.
    pub status: TrackStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame: u64,
    /// Frame dropped during a restart; nothing was detected.
    pub skipped: bool,
    pub detections: Vec<ViewDetection>,
    /// Red, green, yellow.
    pub balls: [Option<BallEstimate>; 3],
    pub effector: Option<EffectorPose>,
    /// Set when this frame triggered a restart.
    pub restart: Option<TrackingError>,
}

/// Runs detection, status updates, triangulation and the rig pose solve over
/// a stream of multi-view frames.
#[derive(Debug, Clone)]
pub struct FrameTracker {
    cfg: TrackerConfig,
    detector: DetectorConfig,
    cams: Vec<CameraModel>,
    rig: MarkerRigSpec,
    nm: NMConfig,
    mode: TriangulationMode,
    /// `tracks[camera][color.index()]`
    tracks: Vec<[CircleTrack; 3]>,
    tolerance_factor: f64,
    skip_remaining: u32,
    frame: u64,
    restarts: u32,
}

impl FrameTracker {
    pub fn new(
        cams: Vec<CameraModel>,
        cfg: TrackerConfig,
        detector: DetectorConfig,
        rig: MarkerRigSpec,
        nm: NMConfig,
        mode: TriangulationMode,
    ) -> Result<Self, TrackingError> {
        cfg.validate()?;
        let tracks = (0..cams.len() as u32)
            .map(|id| BallColor::ALL.map(|c| CircleTrack::new(id, c)))
            .collect();
        Ok(Self {
            cfg,
            detector,
            cams,
            rig,
            nm,
            mode,
            tracks,
            tolerance_factor: 1.0,
            skip_remaining: 0,
            frame: 0,
            restarts: 0,
        })
    }

    pub fn tracks(&self) -> &[[CircleTrack; 3]] {
        &self.tracks
    }

    pub fn restarts(&self) -> u32 {
        self.restarts
    }

    pub fn tolerance_factor(&self) -> f64 {
        self.tolerance_factor
    }

    /// Processes one frame: `images[i]` comes from camera `i`.
    pub fn process(&mut self, images: &[RasterImage]) -> Result<FrameResult, crate::Error> {
        assert_eq!(images.len(), self.cams.len(), "one image per camera");
        let frame = self.frame;
        self.frame += 1;
        if self.skip_remaining > 0 {
            self.skip_remaining -= 1;
            return Ok(FrameResult {
                frame,
                skipped: true,
                detections: Vec::new(),
                balls: [None, None, None],
                effector: None,
                restart: None,
            });
        }

        // detect every ball in every view with bounds from history
        let mut found: Vec<[(Option<DetectedCircle>, bool); 3]> = Vec::with_capacity(images.len());
        for (cam_id, img) in images.iter().enumerate() {
            let centers: Vec<[f64; 2]> = self.tracks[cam_id].iter().filter_map(|t| t.last_center).collect();
            let mut cache = EdgeCache::new(img);
            let mut row = [(None, false); 3];
            for color in BallColor::ALL {
                let track = &self.tracks[cam_id][color.index()];
                let bounds = bound_search_params(track, &centers, self.tolerance_factor, &self.cfg);
                let cfg = DetectorConfig {
                    hough: bounds.apply(&self.detector.hough),
                    ..self.detector.clone()
                };
                // a blur-escalation failure counts as "no detection at max sigma"
                let out = detect_ball_cached(&mut cache, color, &cfg).ok();
                row[color.index()] = match out {
                    Some(o) => (o.circle, o.color_check.is_some_and(|c| c.pass)),
                    None => (None, false),
                };
            }
            found.push(row);
        }

        let was_effective: Vec<[bool; 3]> = self
            .tracks
            .iter()
            .map(|row| row.clone().map(|t| t.status == TrackStatus::Effective))
            .collect();

        // effective tracks first: their rules need no 3D information
        for (cam_id, row) in found.iter().enumerate() {
            for color in BallColor::ALL {
                let t = &mut self.tracks[cam_id][color.index()];
                if t.status == TrackStatus::Effective {
                    let (c, ok) = &row[color.index()];
                    *t = update_track(t, c.as_ref(), *ok, None, &self.cfg);
                }
            }
        }

        let mut balls: [Option<BallEstimate>; 3] = [None, None, None];
        let mut restart = None;
        for color in BallColor::ALL {
            let obs: Vec<(u32, Vec2)> = (0..self.cams.len())
                .filter(|cam_id| self.tracks[*cam_id][color.index()].status == TrackStatus::Effective)
                .filter_map(|cam_id| {
                    found[cam_id][color.index()]
                        .0
                        .map(|c| (cam_id as u32, Vec2::new(c.center[0], c.center[1])))
                })
                .collect();
            match triangulate_ball(color, &obs, &self.cams, self.mode) {
                Ok(b) => balls[color.index()] = Some(b),
                Err(TrackingError::LocalizationUnavailable { effective, .. }) => {
                    if restart.is_none() {
                        restart = Some(TrackingError::LocalizationUnavailable {
                            color,
                            effective,
                            skip_frames: self.cfg.restart_skip,
                            tolerance_factor: self.tolerance_factor * self.cfg.tolerance_growth,
                        });
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }

        // suspended tracks use the reconstructed center for the consistency test
        for (cam_id, row) in found.iter().enumerate() {
            for color in BallColor::ALL {
                let t = &mut self.tracks[cam_id][color.index()];
                if !was_effective[cam_id][color.index()] {
                    let (c, ok) = &row[color.index()];
                    let consistency = match (c, &balls[color.index()]) {
                        (Some(c), Some(b)) => {
                            let ray = self.cams[cam_id].backproject(&Vec2::new(c.center[0], c.center[1]));
                            Some(ray.distance_to_point(&b.center()))
                        }
                        _ => None,
                    };
                    *t = update_track(t, c.as_ref(), *ok, consistency, &self.cfg);
                }
            }
        }

        let detections = found
            .iter()
            .enumerate()
            .flat_map(|(cam_id, row)| {
                let tracks = &self.tracks[cam_id];
                BallColor::ALL.map(|color| ViewDetection {
                    camera_id: cam_id as u32,
                    color,
                    circle: row[color.index()].0,
                    color_ok: row[color.index()].1,
                    status: tracks[color.index()].status,
                })
            })
            .collect();

        if restart.is_some() {
            self.restarts += 1;
            self.tolerance_factor *= self.cfg.tolerance_growth;
            self.skip_remaining = self.cfg.restart_skip;
            for row in &mut self.tracks {
                for t in row.iter_mut() {
                    // keep the radius so the widened window has a center
                    t.status = TrackStatus::Effective;
                    t.last_center = None;
                    t.consecutive_good_frames = 0;
                }
            }
        } else {
            self.tolerance_factor = (self.tolerance_factor / self.cfg.tolerance_growth).max(1.0);
        }

        let effector = match &balls {
            [Some(r), Some(g), Some(y)] => {
                let obs = BallCenters {
                    green: g.center(),
                    yellow: y.center(),
                    red: r.center(),
                };
                match solve_effector_pose(&obs, &self.rig, &self.nm) {
                    Ok(p) => Some(p),
                    Err(crate::effector::EffectorError::NotConverged { best }) => Some(best),
                    Err(_) => None,
                }
            }
            _ => None,
        };

        Ok(FrameResult {
            frame,
            skipped: false,
            detections,
            balls,
            effector,
            restart,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::scene::SceneConfig;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn circle(x: f64, y: f64) -> DetectedCircle {
        DetectedCircle {
            center: [x, y],
            radius: 12.0,
            color: BallColor::Green,
            score: 50.0,
        }
    }

    fn suspended(good: u32) -> CircleTrack {
        CircleTrack {
            status: TrackStatus::Suspended,
            last_center: Some([100.0, 100.0]),
            last_radius: Some(12.0),
            consecutive_good_frames: good,
            ..CircleTrack::new(0, BallColor::Green)
        }
    }

    #[test]
    fn large_jump_suspends() {
        let cfg = TrackerConfig {
            motion_threshold: 20.0,
            ..TrackerConfig::default()
        };
        let t = CircleTrack {
            last_center: Some([100.0, 100.0]),
            ..CircleTrack::new(0, BallColor::Green)
        };
        let next = update_track(&t, Some(&circle(150.0, 100.0)), true, None, &cfg);
        assert_eq!(next.status, TrackStatus::Suspended);
        assert_eq!(next.consecutive_good_frames, 0);
    }

    #[test]
    fn reinstatement_needs_more_than_five_good_frames() {
        let cfg = TrackerConfig::default();
        let mut t = suspended(0);
        for k in 1..=6 {
            t = update_track(&t, Some(&circle(100.0, 100.0)), true, Some(2.0), &cfg);
            let expect = if k <= 5 { TrackStatus::Suspended } else { TrackStatus::Effective };
            assert_eq!(t.status, expect, "after {k} good frames");
        }
    }

    #[test]
    fn one_bad_frame_restarts_the_count() {
        let cfg = TrackerConfig::default();
        let mut t = suspended(5);
        t = update_track(&t, Some(&circle(100.0, 100.0)), true, Some(50.0), &cfg);
        assert_eq!((t.status, t.consecutive_good_frames), (TrackStatus::Suspended, 0));
    }

    // Independent statement of the rules over every input combination.
    #[test]
    fn transition_table_is_exhaustive() {
        let cfg = TrackerConfig::default();
        for status in [TrackStatus::Effective, TrackStatus::Suspended] {
            for good_before in 0..=7u32 {
                for detected in [false, true] {
                    for far in [false, true] {
                        for color_ok in [false, true] {
                            for consistency in [None, Some(3.0), Some(10.0), Some(10.5)] {
                                let t = CircleTrack {
                                    status,
                                    consecutive_good_frames: good_before,
                                    ..suspended(0)
                                };
                                let det = detected.then(|| circle(if far { 126.0 } else { 124.0 }, 100.0));
                                let n = update_track(&t, det.as_ref(), color_ok, consistency, &cfg);
                                let (want_status, want_good) = match status {
                                    TrackStatus::Effective => {
                                        if !detected || !color_ok || far {
                                            (TrackStatus::Suspended, 0)
                                        } else {
                                            (TrackStatus::Effective, good_before + 1)
                                        }
                                    }
                                    TrackStatus::Suspended => {
                                        let consistent = matches!(consistency, Some(c) if c <= 10.0);
                                        if detected && color_ok && consistent {
                                            let g = good_before + 1;
                                            (if g >= 6 { TrackStatus::Effective } else { TrackStatus::Suspended }, g)
                                        } else {
                                            (TrackStatus::Suspended, 0)
                                        }
                                    }
                                };
                                assert_eq!(
                                    (n.status, n.consecutive_good_frames),
                                    (want_status, want_good),
                                    "{status:?} good={good_before} det={detected} far={far} color={color_ok} cons={consistency:?}"
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn search_bounds() {
        let cfg = TrackerConfig::default();
        let t = CircleTrack {
            last_radius: Some(10.0),
            ..CircleTrack::new(0, BallColor::Red)
        };
        let b = bound_search_params(&t, &[[0.0, 0.0], [30.0, 40.0], [100.0, 0.0]], 1.0, &cfg);
        assert!((b.r_min - 7.0).abs() < 1e-12 && (b.r_max - 13.0).abs() < 1e-12);
        assert!((b.d_min - 25.0).abs() < 1e-12);

        let cold = bound_search_params(&CircleTrack::new(0, BallColor::Red), &[], 1.0, &cfg);
        assert_eq!((cold.d_min, cold.r_min, cold.r_max), (20.0, 8.0, 22.0));

        let widened = bound_search_params(&t, &[], 1.5 * 1.5, &cfg);
        assert!((widened.r_max - 16.75).abs() < 1e-12 && (widened.r_min - 3.25).abs() < 1e-12);
    }

    #[test]
    fn pair_examples() {
        let p = Vec3::new(3.0, -2.0, 7.0);
        let r1 = Ray::new(Vec3::new(0.0, 0.0, 0.0), p).unwrap();
        let r2 = Ray::new(Vec3::new(10.0, 5.0, -1.0), p - Vec3::new(10.0, 5.0, -1.0)).unwrap();
        assert!((triangulate_pair(&r1, &r2).unwrap() - p).norm() < 1e-9);

        let a = Ray::new(Vec3::zeros(), Vec3::x()).unwrap();
        let b = Ray::new(Vec3::new(0.0, 0.0, 2.0), Vec3::y()).unwrap();
        assert!((triangulate_pair(&a, &b).unwrap() - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);

        let c = Ray::new(Vec3::new(0.0, 1.0, 0.0), Vec3::x()).unwrap();
        assert!(matches!(triangulate_pair(&a, &c), Err(TrackingError::DegenerateRays { .. })));
    }

    /// Closest point on line 2 to `p`, by projection.
    fn project_onto(r: &Ray, p: &Vec3) -> Vec3 {
        r.origin + r.direction * (p - r.origin).dot(&r.direction)
    }

    /// Midpoint found by scanning s along line 1 for the sign change of
    /// d/ds |p1(s) - proj_2(p1(s))|^2 and bisecting it.
    fn brute_midpoint(r1: &Ray, r2: &Ray) -> Vec3 {
        let slope = |s: f64| {
            let p = r1.point_at(s);
            (p - project_onto(r2, &p)).dot(&r1.direction)
        };
        let mut lo = -1.0e4;
        let mut prev = slope(lo);
        let mut k = 1;
        let mut hi = lo;
        while k <= 20_000 {
            hi = -1.0e4 + k as f64;
            let v = slope(hi);
            if (prev <= 0.0) != (v <= 0.0) {
                break;
            }
            lo = hi;
            prev = v;
            k += 1;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (slope(mid) <= 0.0) == (slope(lo) <= 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let p1 = r1.point_at(0.5 * (lo + hi));
        (p1 + project_onto(r2, &p1)) * 0.5
    }

    #[test]
    fn pair_matches_brute_force_and_is_symmetric() {
        let mut rng = rng_from_seed(21);
        for _ in 0..200 {
            let mut v = || Vec3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
            let r1 = Ray::new(v(), v()).unwrap();
            let r2 = Ray::new(v(), v()).unwrap();
            let m = triangulate_pair(&r1, &r2).unwrap();
            assert!((m - brute_midpoint(&r1, &r2)).norm() < 1e-9);
            assert!((m - triangulate_pair(&r2, &r1).unwrap()).norm() < 1e-12);
        }
    }

    fn rig_cams() -> Vec<CameraModel> {
        SceneConfig::default().cameras().unwrap()
    }

    #[test]
    fn ball_from_ideal_views() {
        let cams = rig_cams();
        let p = Vec3::new(120.0, 10.0, -310.0);
        let obs: Vec<(u32, Vec2)> = cams.iter().enumerate().map(|(i, c)| (i as u32, c.project(&p).unwrap())).collect();
        for mode in [TriangulationMode::PairwiseMean, TriangulationMode::LeastSquares] {
            for n in 2..=4 {
                let b = triangulate_ball(BallColor::Green, &obs[..n], &cams, mode).unwrap();
                assert!((b.center() - p).norm() < 1e-9, "{mode:?} n={n}");
                assert_eq!(b.pair_count, n * (n - 1) / 2);
            }
        }
        let err = triangulate_ball(BallColor::Green, &obs[..1], &cams, TriangulationMode::PairwiseMean).unwrap_err();
        assert!(matches!(err, TrackingError::LocalizationUnavailable { effective: 1, .. }));
    }

    fn median_error(sigma: f64, trials: usize, seed: u64) -> f64 {
        let cams = rig_cams();
        let ws = SceneConfig::default().workspace;
        let mut rng = rng_from_seed(seed);
        let mut errs: Vec<f64> = (0..trials)
            .map(|_| {
                let p = ws.sample(&mut rng);
                let noise = Normal::new(0.0, sigma).unwrap();
                let obs: Vec<(u32, Vec2)> = cams
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (i as u32, c.project(&p).unwrap() + Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng))))
                    .collect();
                let b = triangulate_ball(BallColor::Red, &obs, &cams, TriangulationMode::PairwiseMean).unwrap();
                (b.center() - p).norm()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        errs[trials / 2]
    }

    #[test]
    fn half_pixel_noise_stays_under_a_millimeter_and_scales_with_noise() {
        let m = median_error(0.5, 1000, 5);
        assert!(m < 1.0, "median {m}");
        let sweep: Vec<f64> = [0.25, 0.5, 1.0, 2.0].iter().map(|s| median_error(*s, 400, 6)).collect();
        assert!(sweep.windows(2).all(|w| w[1] > w[0]), "{sweep:?}");
    }
}
