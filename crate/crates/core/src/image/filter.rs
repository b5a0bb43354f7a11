use super::GrayImage;
use crate::prelude::*;

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| {
            let x = i as f64;
            (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k.into_iter().map(|v| v as f32).collect()
}

/// Separable Gaussian blur with clamp-to-edge borders. `sigma <= 0` copies.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if !(sigma > 0.0) {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = k.len() / 2;
    let (w, h) = (img.width as usize, img.height as usize);
    let mut tmp = vec![0.0f32; w * h];
    let mut padded = vec![0.0f32; w + 2 * r];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[i.saturating_sub(r).min(w - 1)];
        }
        let out = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            *o = k.iter().zip(&padded[x..x + k.len()]).map(|(a, b)| a * b).sum();
        }
    }
    let mut data = vec![0.0f32; w * h];
    for y in 0..h {
        let out = &mut data[y * w..(y + 1) * w];
        for (j, kv) in k.iter().enumerate() {
            let sy = (y + j).saturating_sub(r).min(h - 1);
            for (o, t) in out.iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                *o += kv * t;
            }
        }
    }
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// 3x3 Sobel derivatives (unnormalized, as in the usual Canny thresholds).
pub fn sobel(img: &GrayImage) -> (GrayImage, GrayImage) {
    let (w, h) = (img.width as usize, img.height as usize);
    // clamp-padded copy, one pixel each side
    let pw = w + 2;
    let mut p = vec![0.0f32; pw * (h + 2)];
    for y in 0..h + 2 {
        let sy = y.saturating_sub(1).min(h - 1);
        for x in 0..pw {
            p[y * pw + x] = img.data[sy * w + x.saturating_sub(1).min(w - 1)];
        }
    }
    let mut gx = GrayImage::new(img.width, img.height);
    let mut gy = GrayImage::new(img.width, img.height);
    for y in 0..h {
        let (up, mid, dn) = (&p[y * pw..], &p[(y + 1) * pw..], &p[(y + 2) * pw..]);
        for x in 0..w {
            let dx = (up[x + 2] + 2.0 * mid[x + 2] + dn[x + 2]) - (up[x] + 2.0 * mid[x] + dn[x]);
            let dy = (dn[x] + 2.0 * dn[x + 1] + dn[x + 2]) - (up[x] + 2.0 * up[x + 1] + up[x + 2]);
            gx.data[y * w + x] = dx;
            gy.data[y * w + x] = dy;
        }
    }
    (gx, gy)
}

/// Binary edge pixels plus the gradient field they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub width: u32,
    pub height: u32,
    pub edges: Vec<bool>,
    pub gx: Vec<f32>,
    pub gy: Vec<f32>,
}

impl EdgeMap {
    pub fn empty(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            edges: vec![false; n],
            gx: vec![0.0; n],
            gy: vec![0.0; n],
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|e| **e).count()
    }

    pub fn is_edge(&self, x: u32, y: u32) -> bool {
        self.edges[(y * self.width + x) as usize]
    }

    /// Keeps only edges where `mask` is non-zero.
    pub fn masked(mut self, mask: &GrayImage) -> Self {
        assert_eq!((mask.width, mask.height), (self.width, self.height));
        for (e, m) in self.edges.iter_mut().zip(&mask.data) {
            *e &= *m > 0.0;
        }
        self
    }
}

/// Canny edges of an already-blurred image: Sobel gradients, non-maximum
/// suppression in four direction sectors, and hysteresis between `low` and
/// `high` on the L2 gradient magnitude.
pub fn canny(blurred: &GrayImage, low: f32, high: f32) -> EdgeMap {
    let (w, h) = (blurred.width, blurred.height);
    let (gx, gy) = sobel(blurred);
    let n = w as usize * h as usize;
    let mag: Vec<f32> = gx.data.iter().zip(&gy.data).map(|(a, b)| (a * a + b * b).sqrt()).collect();
    let at = |x: i64, y: i64| -> f32 {
        if x < 0 || y < 0 || x >= i64::from(w) || y >= i64::from(h) {
            0.0
        } else {
            mag[(y as u32 * w + x as u32) as usize]
        }
    };

    // 0 = none, 1 = weak, 2 = strong
    let mut class = vec![0u8; n];
    // tan(22.5 deg) and tan(67.5 deg)
    const T1: f32 = 0.414_213_56;
    const T2: f32 = 2.414_213_6;
    for y in 0..i64::from(h) {
        for x in 0..i64::from(w) {
            let i = (y as u32 * w + x as u32) as usize;
            let m = mag[i];
            if m < low || m == 0.0 {
                continue;
            }
            let (ax, ay) = (gx.data[i].abs(), gy.data[i].abs());
            let (n1, n2) = if ay <= T1 * ax {
                (at(x - 1, y), at(x + 1, y))
            } else if ay >= T2 * ax {
                (at(x, y - 1), at(x, y + 1))
            } else if (gx.data[i] > 0.0) == (gy.data[i] > 0.0) {
                (at(x - 1, y - 1), at(x + 1, y + 1))
            } else {
                (at(x + 1, y - 1), at(x - 1, y + 1))
            };
            // ties resolved toward the earlier pixel so ridges stay one pixel wide
            if m > n1 && m >= n2 {
                class[i] = if m >= high { 2 } else { 1 };
            }
        }
    }

    let mut edges = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|i| class[*i] == 2).collect();
    for i in &stack {
        edges[*i] = true;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i as u32 % w) as i64, (i as u32 / w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= i64::from(w) || ny >= i64::from(h) {
                    continue;
                }
                let j = (ny as u32 * w + nx as u32) as usize;
                if class[j] == 1 && !edges[j] {
                    edges[j] = true;
                    stack.push(j);
                }
            }
        }
    }

    EdgeMap {
        width: w,
        height: h,
        edges,
        gx: gx.data,
        gy: gy.data,
    }
}
