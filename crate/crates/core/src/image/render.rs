use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BallColor, RasterImage};
use crate::effector::BallCenters;
use crate::geometry::CameraModel;
use crate::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSettings {
    pub background: [u8; 3],
    /// Per-channel Gaussian sensor noise in gray levels.
    pub noise_sigma: f64,
    /// Anti-aliasing subsamples per pixel side.
    pub supersample: u32,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            background: [15, 15, 15],
            noise_sigma: 2.0,
            supersample: 4,
        }
    }
}

/// Ground truth for one ball in one view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCircle {
    pub color: BallColor,
    pub center: [f64; 2],
    pub radius: f64,
    pub depth: f64,
    /// Share of the disk hidden behind nearer balls.
    pub occluded_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub image: RasterImage,
    /// Balls in front of the camera, in red/green/yellow order.
    pub circles: Vec<OracleCircle>,
    /// Some ball was behind the camera and could not be drawn.
    pub partial: bool,
}

impl RenderedView {
    pub fn circle(&self, color: BallColor) -> Option<&OracleCircle> {
        self.circles.iter().find(|c| c.color == color)
    }
}

fn covered(c: &OracleCircle, x: f64, y: f64) -> bool {
    let (dx, dy) = (x - c.center[0], y - c.center[1]);
    dx * dx + dy * dy <= c.radius * c.radius
}

fn occluded_fraction(target: &OracleCircle, nearer: &[OracleCircle]) -> f64 {
    if nearer.is_empty() {
        return 0.0;
    }
    const N: i32 = 24;
    let (mut inside, mut hidden) = (0u32, 0u32);
    for i in -N..=N {
        for j in -N..=N {
            let (ox, oy) = (f64::from(i) / f64::from(N), f64::from(j) / f64::from(N));
            if ox * ox + oy * oy > 1.0 {
                continue;
            }
            let (x, y) = (target.center[0] + ox * target.radius, target.center[1] + oy * target.radius);
            inside += 1;
            if nearer.iter().any(|c| covered(c, x, y)) {
                hidden += 1;
            }
        }
    }
    f64::from(hidden) / f64::from(inside)
}

/// Projected discs of the three balls in one camera, with their occlusion
/// shares, in red/green/yellow order. The flag is set when some ball is
/// behind the camera.
pub fn oracle_circles(cam: &CameraModel, balls: &BallCenters, ball_radius: f64) -> (Vec<OracleCircle>, bool) {
    let mut partial = false;
    let mut circles = Vec::with_capacity(3);
    for color in BallColor::ALL {
        let p = balls.get(color);
        let depth = cam.depth(&p);
        match cam.project(&p) {
            Ok(uv) if depth > ball_radius => circles.push(OracleCircle {
                color,
                center: [uv.x, uv.y],
                radius: cam.focal_length() * ball_radius / depth,
                depth,
                occluded_fraction: 0.0,
            }),
            _ => partial = true,
        }
    }
    let by_depth = nearest_first(&circles);
    for c in circles.iter_mut() {
        let k = by_depth.iter().position(|b| b.color == c.color).expect("same set");
        c.occluded_fraction = occluded_fraction(c, &by_depth[..k]);
    }
    (circles, partial)
}

// ties keep color order
fn nearest_first(circles: &[OracleCircle]) -> Vec<OracleCircle> {
    let mut v = circles.to_vec();
    v.sort_by(|a, b| a.depth.total_cmp(&b.depth));
    v
}

fn render_view<R: Rng + ?Sized>(
    cam: &CameraModel,
    balls: &BallCenters,
    ball_radius: f64,
    settings: &RenderSettings,
    rng: &mut R,
) -> RenderedView {
    let [w, h] = cam.intrinsics.image_size;
    let (circles, partial) = oracle_circles(cam, balls, ball_radius);
    let by_depth = nearest_first(&circles);

    let mut image = RasterImage::filled(w, h, settings.background);
    let s = settings.supersample.max(1);
    let bg = settings.background.map(f64::from);
    for c in &by_depth {
        let x0 = (c.center[0] - c.radius - 1.0).floor().max(0.0) as i64;
        let x1 = (c.center[0] + c.radius + 1.0).ceil().min(f64::from(w) - 1.0) as i64;
        let y0 = (c.center[1] - c.radius - 1.0).floor().max(0.0) as i64;
        let y1 = (c.center[1] + c.radius + 1.0).ceil().min(f64::from(h) - 1.0) as i64;
        if x1 < x0 || y1 < y0 {
            continue;
        }
        for py in y0..=y1 {
            for px in x0..=x1 {
                // Pixels touched by several balls are recomputed identically.
                let mut acc = [0.0f64; 3];
                for sy in 0..s {
                    for sx in 0..s {
                        let x = px as f64 - 0.5 + (f64::from(sx) + 0.5) / f64::from(s);
                        let y = py as f64 - 0.5 + (f64::from(sy) + 0.5) / f64::from(s);
                        let rgb = by_depth
                            .iter()
                            .find(|b| covered(b, x, y))
                            .map_or(bg, |b| b.color.rgb().map(f64::from));
                        for ch in 0..3 {
                            acc[ch] += rgb[ch];
                        }
                    }
                }
                let n = f64::from(s * s);
                image.set(px as u32, py as u32, acc.map(|v| (v / n).round() as u8));
            }
        }
    }

    if settings.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, settings.noise_sigma).expect("finite sigma");
        for y in 0..h {
            for x in 0..w {
                let px = image.get(x, y);
                let noisy = px.map(|v| (f64::from(v) + normal.sample(rng)).round().clamp(0.0, 255.0) as u8);
                image.set(x, y, noisy);
            }
        }
    }

    RenderedView { image, circles, partial }
}

/// Renders the three balls as flat discs of radius `f r / Z` in every camera,
/// nearer balls drawn over farther ones.
pub fn render_scene<R: Rng + ?Sized>(
    cams: &[CameraModel],
    balls: &BallCenters,
    ball_radius: f64,
    settings: &RenderSettings,
    rng: &mut R,
) -> Vec<RenderedView> {
    cams.iter().map(|c| render_view(c, balls, ball_radius, settings, rng)).collect()
}
