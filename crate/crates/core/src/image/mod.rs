//! Colored-ball circle detection.
//!
//! Two paths run over each color image. The edge path converts to gray,
//! blurs and runs Canny. The color path gates pixels by hue, blurs the binary
//! gate with a sigma of 10% of the expected radius and re-binarizes, which
//! enlarges each ball blob slightly. Multiplying the two keeps the ball's own
//! outline and drops edges elsewhere. A gradient-voting Hough transform then
//! finds circles, with the accumulator threshold tuned by bisection, and a
//! ring of samples just inside each circle confirms its color.

mod color;
mod detect;
mod filter;
mod hough;
mod raster;
mod render;

pub use color::{color_mask, rgb_to_hsv, ColorGate, Hsv};
pub use detect::{
    color_check, color_path_mask, detect_ball, detect_ball_cached, edge_path, preprocess, tune_accumulator_threshold, ColorCheck,
    DetectionOutcome, EdgeCache, DetectorConfig, COLOR_CHECK_MIN_FRACTION, COLOR_CHECK_RING, COLOR_CHECK_SAMPLES, TUNER_TOLERANCE,
};
pub use filter::{canny, gaussian_blur, sobel, EdgeMap};
pub use hough::{hough_circles, DetectedCircle, HoughAccumulator, HoughParams};
pub use raster::{GrayImage, RasterImage};
pub use render::{oracle_circles, render_scene, OracleCircle, RenderSettings, RenderedView};

use serde::{Deserialize, Serialize};


#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ImageError {
    #[error("invalid Hough parameters: {0}")]
    InvalidParams(&'static str),
    #[error("image buffers do not match {width}x{height}")]
    DimensionMismatch { width: u32, height: u32 },
    #[error("expected_k must be at least 1")]
    InvalidExpectedCount,
    /// No accumulator threshold gives exactly `expected` circles: the count
    /// jumps from `above` (more) to `below` (fewer). More blur is needed.
    #[error("detector jumps from {above} to {below} circles around {expected}; escalate blur")]
    BlurEscalation { expected: usize, above: usize, below: usize },
}

/// The three rig ball colors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BallColor {
    Red,
    Green,
    Yellow,
}

impl BallColor {
    pub const ALL: [BallColor; 3] = [BallColor::Red, BallColor::Green, BallColor::Yellow];

    pub fn name(self) -> &'static str {
        match self {
            BallColor::Red => "red",
            BallColor::Green => "green",
            BallColor::Yellow => "yellow",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "red" => Some(BallColor::Red),
            "green" => Some(BallColor::Green),
            "yellow" => Some(BallColor::Yellow),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            BallColor::Red => 0,
            BallColor::Green => 1,
            BallColor::Yellow => 2,
        }
    }

    /// Flat-shaded render color.
    pub fn rgb(self) -> [u8; 3] {
        match self {
            BallColor::Red => [255, 40, 40],
            BallColor::Green => [40, 220, 40],
            BallColor::Yellow => [230, 230, 30],
        }
    }

    /// Hue/saturation/value gate used by the color path and the color check.
    pub fn gate(self) -> ColorGate {
        let (hue_min, hue_max) = match self {
            BallColor::Red => (340.0, 20.0),
            BallColor::Green => (90.0, 150.0),
            BallColor::Yellow => (40.0, 80.0),
        };
        ColorGate {
            hue_min,
            hue_max,
            min_saturation: 0.4,
            min_value: 0.2,
        }
    }
}
