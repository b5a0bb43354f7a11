use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{BallColor, EdgeMap, ImageError};
use crate::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoughParams {
    /// Inverse accumulator resolution.
    pub dp: f64,
    /// High Canny threshold (para1); the low threshold is half of it.
    pub canny_high: f64,
    /// Minimum accumulator votes (para2).
    pub accumulator_threshold: f64,
    pub d_min: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Edge-path blur.
    pub blur_sigma: f64,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            dp: 1.0,
            canny_high: 100.0,
            accumulator_threshold: 20.0,
            d_min: 20.0,
            r_min: 8.0,
            r_max: 22.0,
            blur_sigma: 1.5,
        }
    }
}

impl HoughParams {
    pub fn validate(&self) -> Result<(), ImageError> {
        if !(self.dp >= 1.0) {
            return Err(ImageError::InvalidParams("dp must be >= 1"));
        }
        if !(self.r_min > 0.0 && self.r_min < self.r_max && self.r_max.is_finite()) {
            return Err(ImageError::InvalidParams("need 0 < r_min < r_max"));
        }
        if !(self.d_min > 0.0) {
            return Err(ImageError::InvalidParams("d_min must be positive"));
        }
        if !(self.accumulator_threshold > 0.0) {
            return Err(ImageError::InvalidParams("accumulator threshold must be positive"));
        }
        if !(self.canny_high > 0.0 && self.blur_sigma > 0.0) {
            return Err(ImageError::InvalidParams("canny_high and blur_sigma must be positive"));
        }
        Ok(())
    }

    /// Expected radius used for the color-path blur.
    pub fn nominal_radius(&self) -> f64 {
        0.5 * (self.r_min + self.r_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedCircle {
    pub center: [f64; 2],
    pub radius: f64,
    pub color: BallColor,
    /// Votes at the accumulator peak.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    cell: usize,
    score: u32,
}

/// Votes from one edge map, reusable across accumulator thresholds.
#[derive(Debug, Clone)]
pub struct HoughAccumulator {
    width: u32,
    height: u32,
    dp: f64,
    cols: usize,
    r_min: f64,
    r_max: f64,
    /// Local maxima, best score first, ties in row-major order.
    candidates: Vec<Candidate>,
    points: Vec<[f64; 2]>,
}

impl HoughAccumulator {
    pub fn build(edges: &EdgeMap, params: &HoughParams) -> Result<Self, ImageError> {
        params.validate()?;
        let dp = params.dp;
        let cols = (f64::from(edges.width) / dp).ceil() as usize;
        let rows = (f64::from(edges.height) / dp).ceil() as usize;
        let mut acc = vec![0u32; cols * rows];
        let mut points = Vec::new();
        let r_lo = params.r_min.floor().max(1.0) as i64;
        let r_hi = params.r_max.ceil() as i64;

        for y in 0..edges.height {
            for x in 0..edges.width {
                let i = (y * edges.width + x) as usize;
                if !edges.edges[i] {
                    continue;
                }
                points.push([f64::from(x), f64::from(y)]);
                let (gx, gy) = (f64::from(edges.gx[i]), f64::from(edges.gy[i]));
                let g = (gx * gx + gy * gy).sqrt();
                if g == 0.0 {
                    continue;
                }
                let (ux, uy) = (gx / g, gy / g);
                for sign in [1.0, -1.0] {
                    let mut last = usize::MAX;
                    for r in r_lo..=r_hi {
                        let cx = (f64::from(x) + sign * r as f64 * ux) / dp;
                        let cy = (f64::from(y) + sign * r as f64 * uy) / dp;
                        let (ci, cj) = (cx.round(), cy.round());
                        if ci < 0.0 || cj < 0.0 || ci >= cols as f64 || cj >= rows as f64 {
                            break;
                        }
                        let cell = cj as usize * cols + ci as usize;
                        if cell != last {
                            acc[cell] += 1;
                            last = cell;
                        }
                    }
                }
            }
        }

        let mut candidates = Vec::new();
        for j in 0..rows {
            for i in 0..cols {
                let v = acc[j * cols + i];
                if v == 0 {
                    continue;
                }
                let mut is_max = true;
                'n: for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (ni, nj) = (i as i64 + di, j as i64 + dj);
                        if ni < 0 || nj < 0 || ni >= cols as i64 || nj >= rows as i64 {
                            continue;
                        }
                        let u = acc[nj as usize * cols + ni as usize];
                        let earlier = dj < 0 || (dj == 0 && di < 0);
                        if u > v || (earlier && u == v) {
                            is_max = false;
                            break 'n;
                        }
                    }
                }
                if is_max {
                    candidates.push(Candidate {
                        cell: j * cols + i,
                        score: v,
                    });
                }
            }
        }
        candidates.sort_by(|a, b| b.score.cmp(&a.score).then(a.cell.cmp(&b.cell)));

        Ok(Self {
            width: edges.width,
            height: edges.height,
            dp,
            cols,
            r_min: params.r_min,
            r_max: params.r_max,
            candidates,
            points,
        })
    }

    pub fn max_score(&self) -> f64 {
        self.candidates.first().map_or(0.0, |c| f64::from(c.score))
    }

    fn cell_center(&self, cell: usize) -> [f64; 2] {
        [(cell % self.cols) as f64 * self.dp, (cell / self.cols) as f64 * self.dp]
    }

    fn accepted(&self, threshold: f64, d_min: f64) -> Vec<Candidate> {
        let mut out: Vec<Candidate> = Vec::new();
        for c in &self.candidates {
            if f64::from(c.score) < threshold {
                break;
            }
            let p = self.cell_center(c.cell);
            let far = out.iter().all(|a| {
                let q = self.cell_center(a.cell);
                (p[0] - q[0]).hypot(p[1] - q[1]) >= d_min
            });
            if far {
                out.push(*c);
            }
        }
        out
    }

    /// Number of circles `detect` would return, without fitting radii.
    pub fn count(&self, threshold: f64, d_min: f64) -> usize {
        self.accepted(threshold, d_min).len()
    }

    pub fn detect(&self, threshold: f64, d_min: f64, color: BallColor) -> Vec<DetectedCircle> {
        self.accepted(threshold, d_min)
            .into_iter()
            .filter_map(|c| {
                let (center, radius) = self.fit(self.cell_center(c.cell))?;
                Some(DetectedCircle {
                    center,
                    radius,
                    color,
                    score: f64::from(c.score),
                })
            })
            .collect()
    }

    /// Radius from the modal edge distance, then an algebraic circle fit on the
    /// edge points near that radius.
    fn fit(&self, c0: [f64; 2]) -> Option<([f64; 2], f64)> {
        let bins = (self.r_max.ceil() as usize) + 2;
        let mut hist = vec![0u32; bins];
        for p in &self.points {
            let d = (p[0] - c0[0]).hypot(p[1] - c0[1]);
            if d >= self.r_min - 0.5 && d < self.r_max + 0.5 {
                hist[d.round() as usize] += 1;
            }
        }
        // smoothed over neighboring bins so a ring split across two bins still wins
        let mut best = (0u32, 0usize);
        for r in 1..bins - 1 {
            let s = hist[r - 1] + 2 * hist[r] + hist[r + 1];
            if s > best.0 {
                best = (s, r);
            }
        }
        if best.0 == 0 {
            return None;
        }
        let mut center = c0;
        let mut radius = (best.1 as f64).clamp(self.r_min, self.r_max);
        let mut band = 2.0;
        for _ in 0..3 {
            let inliers: Vec<[f64; 2]> = self
                .points
                .iter()
                .copied()
                .filter(|p| ((p[0] - center[0]).hypot(p[1] - center[1]) - radius).abs() <= band)
                .collect();
            let Some((c, r)) = kasa_fit(&inliers) else { break };
            if (c[0] - c0[0]).hypot(c[1] - c0[1]) > 3.0 * self.dp || !(r >= self.r_min && r <= self.r_max) {
                break;
            }
            center = c;
            radius = r;
            band = 1.5;
        }
        let inside = center[0] >= 0.0
            && center[1] >= 0.0
            && center[0] <= f64::from(self.width - 1)
            && center[1] <= f64::from(self.height - 1);
        inside.then_some((center, radius))
    }
}

/// Least-squares circle through points, minimizing the algebraic distance
/// `x^2 + y^2 + D x + E y + F`. Coordinates are centered for conditioning.
fn kasa_fit(points: &[[f64; 2]]) -> Option<([f64; 2], f64)> {
    if points.len() < 6 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for p in points {
        let (x, y) = (p[0] - mx, p[1] - my);
        let row = Vector3::new(x, y, 1.0);
        a += row * row.transpose();
        b -= row * (x * x + y * y);
    }
    let sol = a.lu().solve(&b)?;
    let (cx, cy) = (-sol[0] / 2.0, -sol[1] / 2.0);
    let r2 = cx * cx + cy * cy - sol[2];
    (r2 > 0.0 && r2.is_finite()).then(|| ([cx + mx, cy + my], r2.sqrt()))
}

/// Circles with at least `accumulator_threshold` votes, best first, no two
/// centers closer than `d_min`.
pub fn hough_circles(edges: &EdgeMap, params: &HoughParams, color: BallColor) -> Result<Vec<DetectedCircle>, ImageError> {
    let acc = HoughAccumulator::build(edges, params)?;
    Ok(acc.detect(params.accumulator_threshold, params.d_min, color))
}
