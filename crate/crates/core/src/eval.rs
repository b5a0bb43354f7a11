//! RMS and standard-deviation summaries of position errors.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::prelude::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("need at least two errors, got {0}")]
    TooFewSamples(usize),
    #[error("non-finite error at index {0}")]
    NonFinite(usize),
    #[error("reports cover different sample counts ({before} vs {after})")]
    SampleCountMismatch { before: usize, after: usize },
    #[error("improvement undefined: the baseline {0} is zero")]
    UndefinedImprovement(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorSource {
    Reported,
    Corrected,
    Measurement,
}

impl ErrorSource {
    pub fn name(self) -> &'static str {
        match self {
            ErrorSource::Reported => "reported",
            ErrorSource::Corrected => "corrected",
            ErrorSource::Measurement => "measurement",
        }
    }
}

/// Error statistics in mm. Standard deviations use the population (divide
/// by n) convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub source: ErrorSource,
    pub count: usize,
    pub mean: [f64; 3],
    pub rms: [f64; 3],
    pub sd: [f64; 3],
    /// Root mean square of the error norms.
    pub rms_3d: f64,
    /// Standard deviation of the error norms.
    pub sd_3d_norm: f64,
    /// Square root of the summed per-axis variances. Used for thresholds.
    pub sd_3d_signed: f64,
}

pub fn compute_report(errors: &[Vec3], source: ErrorSource) -> Result<ErrorReport, EvalError> {
    let n = errors.len();
    if n < 2 {
        return Err(EvalError::TooFewSamples(n));
    }
    if let Some(i) = errors.iter().position(|e| !e.iter().all(|v| v.is_finite())) {
        return Err(EvalError::NonFinite(i));
    }
    let nf = n as f64;
    let mut mean = [0.0; 3];
    let mut sq = [0.0; 3];
    let mut norm_sum = 0.0;
    for e in errors {
        for j in 0..3 {
            mean[j] += e[j];
            sq[j] += e[j] * e[j];
        }
        norm_sum += e.norm();
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let rms = sq.map(|s| (s / nf).sqrt());
    // two-pass variances; the one-pass form loses digits when the mean is large
    let mut var = [0.0; 3];
    let norm_mean = norm_sum / nf;
    let mut norm_var = 0.0;
    for e in errors {
        for j in 0..3 {
            var[j] += (e[j] - mean[j]).powi(2);
        }
        norm_var += (e.norm() - norm_mean).powi(2);
    }
    let var = var.map(|v| v / nf);
    Ok(ErrorReport {
        source,
        count: n,
        mean,
        rms,
        sd: var.map(|v| v.sqrt()),
        rms_3d: ((sq[0] + sq[1] + sq[2]) / nf).sqrt(),
        sd_3d_norm: (norm_var / nf).sqrt(),
        sd_3d_signed: (var[0] + var[1] + var[2]).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub rms_reduction_pct: f64,
    pub sd_reduction_pct: f64,
}

/// Percentage reductions `100 (1 - after / before)` of the 3D RMS and the
/// signed 3D standard deviation.
pub fn improvement_summary(before: &ErrorReport, after: &ErrorReport) -> Result<Improvement, EvalError> {
    if before.count != after.count {
        return Err(EvalError::SampleCountMismatch {
            before: before.count,
            after: after.count,
        });
    }
    if before.rms_3d == 0.0 {
        return Err(EvalError::UndefinedImprovement("RMS"));
    }
    if before.sd_3d_signed == 0.0 {
        return Err(EvalError::UndefinedImprovement("standard deviation"));
    }
    Ok(Improvement {
        rms_reduction_pct: 100.0 * (1.0 - after.rms_3d / before.rms_3d),
        sd_reduction_pct: 100.0 * (1.0 - after.sd_3d_signed / before.sd_3d_signed),
    })
}
