//! Row types of every delimited-text artifact. Column order is the field
//! order below.

use eeprec_core::eval::{ErrorReport, Improvement};
use eeprec_core::geometry::Pose;
use serde::{Deserialize, Serialize};

/// One marker seen by one camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerRow {
    pub camera_id: u32,
    pub marker_id: u32,
    pub x_w: f64,
    pub y_w: f64,
    pub z_w: f64,
    pub u_px: f64,
    pub v_px: f64,
}

/// Camera pose in world millimeters and radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPoseRow {
    pub camera_id: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl CameraPoseRow {
    pub fn new(camera_id: u32, pose: &Pose) -> Self {
        let [x, y, z, alpha, beta, gamma] = pose.to_params();
        Self {
            camera_id,
            x,
            y,
            z,
            alpha,
            beta,
            gamma,
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::from_params(&[self.x, self.y, self.z, self.alpha, self.beta, self.gamma])
    }
}

/// Calibration quality per camera, px.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub camera_id: u32,
    pub markers: usize,
    pub initial_rms_px: f64,
    pub final_rms_px: f64,
    pub iterations: usize,
}

/// True marker rig pose of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigTruthRow {
    pub frame: u64,
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl RigTruthRow {
    pub fn pose(&self) -> Pose {
        Pose::from_params(&[self.x, self.y, self.z, self.alpha, self.beta, self.gamma])
    }
}

/// One rendered image file, relative to the frames directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameIndexRow {
    pub frame: u64,
    pub timestamp: f64,
    pub camera_id: u32,
    pub file: String,
}

/// Where a ball really is in a rendered image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub frame: u64,
    pub camera_id: u32,
    pub color: String,
    pub u: f64,
    pub v: f64,
    pub radius: f64,
    pub occluded_fraction: f64,
}

/// Untracked single-view detection. Circle columns are empty when nothing
/// was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub frame: u64,
    pub camera_id: u32,
    pub color: String,
    pub u: Option<f64>,
    pub v: Option<f64>,
    pub radius: Option<f64>,
    pub score: Option<f64>,
    /// `accepted`, `color_rejected` or `missing`.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackLogRow {
    pub frame: u64,
    pub camera: u32,
    pub color: String,
    /// Track status after the frame, or `skipped` during a restart.
    pub status: String,
    pub u: Option<f64>,
    pub v: Option<f64>,
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallRow {
    pub frame: u64,
    pub color: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub pair_count: u32,
}

/// Measured effector pose; the label source of the correction phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub residual_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_rms_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub trajectory_id: u32,
    pub split: String,
}

/// One record of the corrected stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectedRow {
    pub trajectory_id: u32,
    pub timestamp: f64,
    pub reported_x: f64,
    pub reported_y: f64,
    pub reported_z: f64,
    pub corrected_x: f64,
    pub corrected_y: f64,
    pub corrected_z: f64,
}

/// Error statistics, mm. Standard deviations use the population (divide
/// by n) convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub source: String,
    pub count: usize,
    pub mean_x: f64,
    pub mean_y: f64,
    pub mean_z: f64,
    pub rms_x: f64,
    pub rms_y: f64,
    pub rms_z: f64,
    pub rms_3d: f64,
    pub sd_x: f64,
    pub sd_y: f64,
    pub sd_z: f64,
    pub sd_3d_signed: f64,
    pub sd_3d_norm: f64,
}

impl ReportRow {
    pub fn new(label: &str, r: &ErrorReport) -> Self {
        Self {
            label: label.to_string(),
            source: r.source.name().to_string(),
            count: r.count,
            mean_x: r.mean[0],
            mean_y: r.mean[1],
            mean_z: r.mean[2],
            rms_x: r.rms[0],
            rms_y: r.rms[1],
            rms_z: r.rms[2],
            rms_3d: r.rms_3d,
            sd_x: r.sd[0],
            sd_y: r.sd[1],
            sd_z: r.sd[2],
            sd_3d_signed: r.sd_3d_signed,
            sd_3d_norm: r.sd_3d_norm,
        }
    }
}

pub const REPORT_COMMENTS: &[&str] = &[
    "errors in mm; standard deviations are population (divide by n)",
    "sd_3d_signed = sqrt(sd_x^2 + sd_y^2 + sd_z^2); sd_3d_norm = SD of the error norms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub label: String,
    pub rms_before: f64,
    pub rms_after: f64,
    pub rms_reduction_pct: f64,
    pub sd_before: f64,
    pub sd_after: f64,
    pub sd_reduction_pct: f64,
}

impl ImprovementRow {
    pub fn new(label: &str, before: &ErrorReport, after: &ErrorReport, imp: &Improvement) -> Self {
        Self {
            label: label.to_string(),
            rms_before: before.rms_3d,
            rms_after: after.rms_3d,
            rms_reduction_pct: imp.rms_reduction_pct,
            sd_before: before.sd_3d_signed,
            sd_after: after.sd_3d_signed,
            sd_reduction_pct: imp.sd_reduction_pct,
        }
    }
}

/// Trace data for external plotting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub trajectory_id: u32,
    pub time: f64,
    pub true_x: f64,
    pub true_y: f64,
    pub true_z: f64,
    pub reported_x: f64,
    pub reported_y: f64,
    pub reported_z: f64,
    pub corrected_x: f64,
    pub corrected_y: f64,
    pub corrected_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub check: String,
    pub value: f64,
    /// `>=` or `<=`.
    pub relation: String,
    pub limit: f64,
    pub pass: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::{read_table, write_table};

    #[test]
    fn floats_and_empty_cells_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let rows = vec![
            DetectionRow {
                frame: 3,
                camera_id: 1,
                color: "red".into(),
                u: Some(0.1 + 0.2),
                v: Some(-1e-300),
                radius: Some(12.345678901234567),
                score: Some(40.0),
                status: "accepted".into(),
            },
            DetectionRow {
                frame: 3,
                camera_id: 2,
                color: "green".into(),
                u: None,
                v: None,
                radius: None,
                score: None,
                status: "missing".into(),
            },
        ];
        write_table(&path, &["hello"], &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# hello\nframe,camera_id,color,u,v,radius,score,status\n"));
        let back: Vec<DetectionRow> = read_table(&path).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn camera_rows_keep_the_pose() {
        let pose = Pose::from_params(&[1.0, -2.0, 3.5, 0.1, -0.2, 0.3]);
        let row = CameraPoseRow::new(4, &pose);
        let back = row.pose();
        assert!((back.position - pose.position).norm() < 1e-12);
        assert!(back.orientation.angle_to(&pose.orientation) < 1e-12);
    }
}
