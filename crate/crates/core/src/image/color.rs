use serde::{Deserialize, Serialize};

use super::{GrayImage, RasterImage};

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hsv {
    pub h: f32,
    pub s: f32,
    pub v: f32,
}

pub fn rgb_to_hsv(rgb: [u8; 3]) -> Hsv {
    let [r, g, b] = rgb.map(|c| f32::from(c) / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let h = if h < 0.0 { h + 360.0 } else { h };
    Hsv { h, s, v: max }
}

/// Accepts pixels whose hue falls in `[hue_min, hue_max]` (wrapping through
/// zero when `hue_min > hue_max`) with enough saturation and brightness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorGate {
    pub hue_min: f32,
    pub hue_max: f32,
    pub min_saturation: f32,
    pub min_value: f32,
}

impl ColorGate {
    pub fn accepts(&self, hsv: Hsv) -> bool {
        let hue_ok = if self.hue_min <= self.hue_max {
            hsv.h >= self.hue_min && hsv.h <= self.hue_max
        } else {
            hsv.h >= self.hue_min || hsv.h <= self.hue_max
        };
        hue_ok && hsv.s > self.min_saturation && hsv.v > self.min_value
    }

    pub fn accepts_rgb(&self, rgb: [u8; 3]) -> bool {
        self.accepts(rgb_to_hsv(rgb))
    }
}

/// 1.0 where the gate accepts the pixel, 0.0 elsewhere.
pub fn color_mask(img: &RasterImage, gate: &ColorGate) -> GrayImage {
    let mut out = GrayImage::new(img.width(), img.height());
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    for (i, o) in out.data.iter_mut().enumerate() {
        let px = [r[i], g[i], b[i]];
        // most pixels are dark background; skip the hue math for them
        if f32::from(px[0].max(px[1]).max(px[2])) <= gate.min_value * 255.0 {
            continue;
        }
        if gate.accepts_rgb(px) {
            *o = 1.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::BallColor;

    #[test]
    fn primaries() {
        let r = rgb_to_hsv([255, 0, 0]);
        assert_eq!((r.h, r.s, r.v), (0.0, 1.0, 1.0));
        assert!((rgb_to_hsv([0, 255, 0]).h - 120.0).abs() < 1e-4);
        assert!((rgb_to_hsv([0, 0, 255]).h - 240.0).abs() < 1e-4);
        assert!((rgb_to_hsv([255, 255, 0]).h - 60.0).abs() < 1e-4);
        assert!((rgb_to_hsv([255, 0, 128]).h - 329.88).abs() < 0.1);
        assert_eq!(rgb_to_hsv([90, 90, 90]).s, 0.0);
    }

    #[test]
    fn each_render_color_passes_only_its_own_gate() {
        for a in BallColor::ALL {
            for b in BallColor::ALL {
                assert_eq!(b.gate().accepts_rgb(a.rgb()), a == b, "{a:?} under {b:?} gate");
            }
        }
    }

    #[test]
    fn dark_and_gray_pixels_are_rejected() {
        for c in BallColor::ALL {
            let g = c.gate();
            assert!(!g.accepts_rgb([15, 15, 15]));
            assert!(!g.accepts_rgb([30, 5, 5]));
            assert!(!g.accepts_rgb([200, 200, 200]));
        }
    }
}
