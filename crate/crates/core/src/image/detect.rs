use serde::{Deserialize, Serialize};

use super::{
    canny, color_mask, gaussian_blur, BallColor, DetectedCircle, EdgeMap, GrayImage, HoughAccumulator, HoughParams,
    ImageError, RasterImage,
};
use crate::prelude::*;

pub const COLOR_CHECK_SAMPLES: usize = 32;
/// Sample ring radius as a fraction of the circle radius.
pub const COLOR_CHECK_RING: f64 = 0.9;
/// The check passes when strictly more than this share of samples match.
pub const COLOR_CHECK_MIN_FRACTION: f64 = 0.25;

/// Binarization level after the color-path blur; low, so blobs grow.
const COLOR_PATH_LEVEL: f32 = 0.05;

/// Bisection stops once the bracket is this narrow, in votes.
pub const TUNER_TOLERANCE: f64 = 0.5;

/// Color path: hue gate, blur with sigma of 10% of the expected radius, then
/// a low binarization level that leaves each blob slightly larger than the
/// disc it came from.
pub fn color_path_mask(img: &RasterImage, color: BallColor, expected_radius: f64) -> GrayImage {
    let gate = color_mask(img, &color.gate());
    let mut blurred = gaussian_blur(&gate, 0.1 * expected_radius);
    for v in &mut blurred.data {
        *v = if *v > COLOR_PATH_LEVEL { 1.0 } else { 0.0 };
    }
    blurred
}

/// Gray, blur, Canny with the low threshold at half of `canny_high`.
pub fn edge_path(img: &RasterImage, sigma: f64, canny_high: f64) -> EdgeMap {
    let blurred = gaussian_blur(&img.to_gray(), sigma);
    canny(&blurred, (canny_high / 2.0) as f32, canny_high as f32)
}

/// The full two-path chain: Canny edges kept only inside the enlarged color
/// blobs of `color`. Uses `params.blur_sigma` for the edge path and the middle
/// of the radius range as expected radius.
pub fn preprocess(img: &RasterImage, color: BallColor, params: &HoughParams) -> Result<EdgeMap, ImageError> {
    params.validate()?;
    let edges = edge_path(img, params.blur_sigma, params.canny_high);
    Ok(edges.masked(&color_path_mask(img, color, params.nominal_radius())))
}

/// Result of a tuning run: the threshold and whether it is a verified lower
/// bound. It is not when even the loosest threshold yields exactly `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Tuned {
    pub threshold: f64,
    pub tunable: bool,
}

pub(crate) fn tune_on(acc: &HoughAccumulator, d_min: f64, k: usize) -> Result<Tuned, ImageError> {
    if k == 0 {
        return Err(ImageError::InvalidExpectedCount);
    }
    // scores are whole votes, so a threshold of 1 admits every candidate
    let loosest = acc.count(1.0, d_min);
    if loosest < k {
        return Err(ImageError::BlurEscalation {
            expected: k,
            above: loosest,
            below: loosest,
        });
    }
    if loosest == k {
        return Ok(Tuned {
            threshold: 1.0,
            tunable: false,
        });
    }
    let (mut lo, mut hi) = (1.0, acc.max_score() + 1.0);
    while hi - lo > TUNER_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if acc.count(mid, d_min) > k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let n = acc.count(hi, d_min);
    if n == k {
        Ok(Tuned {
            threshold: hi,
            tunable: true,
        })
    } else {
        Err(ImageError::BlurEscalation {
            expected: k,
            above: acc.count(lo, d_min),
            below: n,
        })
    }
}

/// Smallest accumulator threshold, to within half a vote, at which exactly
/// `expected_k` circles are found.
pub fn tune_accumulator_threshold(edges: &EdgeMap, params: &HoughParams, expected_k: usize) -> Result<f64, ImageError> {
    let acc = HoughAccumulator::build(edges, params)?;
    tune_on(&acc, params.d_min, expected_k).map(|t| t.threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorCheck {
    pub fraction: f64,
    pub pass: bool,
}

/// Samples a ring at 90% of the radius; passes when more than a quarter of
/// the samples fall inside the color gate. Samples outside the image miss.
pub fn color_check(img: &RasterImage, circle: &DetectedCircle, color: BallColor) -> ColorCheck {
    let gate = color.gate();
    let mut hits = 0usize;
    for i in 0..COLOR_CHECK_SAMPLES {
        let t = 2.0 * core::f64::consts::PI * i as f64 / COLOR_CHECK_SAMPLES as f64;
        let x = (circle.center[0] + COLOR_CHECK_RING * circle.radius * t.cos()).round();
        let y = (circle.center[1] + COLOR_CHECK_RING * circle.radius * t.sin()).round();
        if x < 0.0 || y < 0.0 || x >= f64::from(img.width()) || y >= f64::from(img.height()) {
            continue;
        }
        if gate.accepts_rgb(img.get(x as u32, y as u32)) {
            hits += 1;
        }
    }
    let fraction = hits as f64 / COLOR_CHECK_SAMPLES as f64;
    ColorCheck {
        fraction,
        pass: fraction > COLOR_CHECK_MIN_FRACTION,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub hough: HoughParams,
    /// Blur is multiplied by this on each escalation...
    pub blur_growth: f64,
    /// ...and never raised past this.
    pub max_blur_sigma: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            hough: HoughParams::default(),
            blur_growth: 1.5,
            max_blur_sigma: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOutcome {
    pub circle: Option<DetectedCircle>,
    pub color_check: Option<ColorCheck>,
    pub threshold: f64,
    pub blur_sigma: f64,
    /// The threshold is a verified lower bound.
    pub tunable: bool,
}

impl DetectionOutcome {
    /// A circle was found and passed the color check.
    pub fn accepted(&self) -> Option<&DetectedCircle> {
        match (&self.circle, &self.color_check) {
            (Some(c), Some(cc)) if cc.pass => Some(c),
            _ => None,
        }
    }
}

/// Edge-path results for one image, keyed by blur sigma and Canny threshold,
/// so the three colors share the gray/blur/Canny work.
#[derive(Debug)]
pub struct EdgeCache<'a> {
    img: &'a RasterImage,
    entries: Vec<(u64, u64, EdgeMap)>,
}

impl<'a> EdgeCache<'a> {
    pub fn new(img: &'a RasterImage) -> Self {
        Self { img, entries: Vec::new() }
    }

    pub fn image(&self) -> &'a RasterImage {
        self.img
    }

    pub fn edges(&mut self, sigma: f64, canny_high: f64) -> &EdgeMap {
        let key = (sigma.to_bits(), canny_high.to_bits());
        let i = match self.entries.iter().position(|e| (e.0, e.1) == key) {
            Some(i) => i,
            None => {
                self.entries.push((key.0, key.1, edge_path(self.img, sigma, canny_high)));
                self.entries.len() - 1
            }
        };
        &self.entries[i].2
    }
}

/// Finds the single ball of `color`: preprocess, tune the threshold to one
/// circle, escalate blur when the count skips over one, color-check.
pub fn detect_ball(img: &RasterImage, color: BallColor, cfg: &DetectorConfig) -> Result<DetectionOutcome, ImageError> {
    detect_ball_cached(&mut EdgeCache::new(img), color, cfg)
}

/// [`detect_ball`] reusing edge maps already computed for the same image.
pub fn detect_ball_cached(cache: &mut EdgeCache<'_>, color: BallColor, cfg: &DetectorConfig) -> Result<DetectionOutcome, ImageError> {
    cfg.hough.validate()?;
    if !(cfg.blur_growth > 1.0 && cfg.max_blur_sigma >= cfg.hough.blur_sigma) {
        return Err(ImageError::InvalidParams("blur escalation needs growth > 1 and max >= initial"));
    }
    let img = cache.image();
    let mask = color_path_mask(img, color, cfg.hough.nominal_radius());
    let mut params = cfg.hough.clone();
    loop {
        let edges = cache.edges(params.blur_sigma, params.canny_high).clone().masked(&mask);
        let acc = HoughAccumulator::build(&edges, &params)?;
        match tune_on(&acc, params.d_min, 1) {
            Ok(t) => {
                let circle = acc.detect(t.threshold, params.d_min, color).into_iter().next();
                let color_check = circle.as_ref().map(|c| color_check(img, c, color));
                return Ok(DetectionOutcome {
                    circle,
                    color_check,
                    threshold: t.threshold,
                    blur_sigma: params.blur_sigma,
                    tunable: t.tunable,
                });
            }
            Err(ImageError::BlurEscalation { above, .. }) if above == 0 => {
                return Ok(DetectionOutcome {
                    circle: None,
                    color_check: None,
                    threshold: 1.0,
                    blur_sigma: params.blur_sigma,
                    tunable: false,
                });
            }
            Err(e @ ImageError::BlurEscalation { .. }) => {
                let next = params.blur_sigma * cfg.blur_growth;
                if next > cfg.max_blur_sigma {
                    return Err(e);
                }
                params.blur_sigma = next;
            }
            Err(e) => return Err(e),
        }
    }
}
