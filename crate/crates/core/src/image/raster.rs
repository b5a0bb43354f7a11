use super::ImageError;
use crate::prelude::*;

/// An 8-bit RGB image stored as three planes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    planes: [Vec<u8>; 3],
}

impl RasterImage {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width >= 1 && height >= 1, "image must be at least 1x1");
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            planes: [vec![rgb[0]; n], vec![rgb[1]; n], vec![rgb[2]; n]],
        }
    }

    pub fn from_planes(width: u32, height: u32, planes: [Vec<u8>; 3]) -> Result<Self, ImageError> {
        let n = width as usize * height as usize;
        if width == 0 || height == 0 || planes.iter().any(|p| p.len() != n) {
            return Err(ImageError::DimensionMismatch { width, height });
        }
        Ok(Self { width, height, planes })
    }

    /// From row-major `RGBRGB...` bytes.
    pub fn from_interleaved(width: u32, height: u32, rgb: &[u8]) -> Result<Self, ImageError> {
        let n = width as usize * height as usize;
        if width == 0 || height == 0 || rgb.len() != 3 * n {
            return Err(ImageError::DimensionMismatch { width, height });
        }
        let mut planes = [vec![0; n], vec![0; n], vec![0; n]];
        for (i, px) in rgb.chunks_exact(3).enumerate() {
            for c in 0..3 {
                planes[c][i] = px[c];
            }
        }
        Ok(Self { width, height, planes })
    }

    pub fn to_interleaved(&self) -> Vec<u8> {
        let n = self.pixel_count();
        let mut out = Vec::with_capacity(3 * n);
        for i in 0..n {
            out.extend_from_slice(&[self.planes[0][i], self.planes[1][i], self.planes[2][i]]);
        }
        out
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn plane(&self, channel: usize) -> &[u8] {
        &self.planes[channel]
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y * self.width + x) as usize;
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y * self.width + x) as usize;
        for c in 0..3 {
            self.planes[c][i] = rgb[c];
        }
    }

    /// Luma with Rec. 601 weights.
    pub fn to_gray(&self) -> GrayImage {
        let data = (0..self.pixel_count())
            .map(|i| {
                0.299 * f32::from(self.planes[0][i]) + 0.587 * f32::from(self.planes[1][i]) + 0.114 * f32::from(self.planes[2][i])
            })
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// A single-channel float image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[(y * self.width + x) as usize]
    }

    /// Clamp-to-edge access.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> f32 {
        let xc = x.clamp(0, i64::from(self.width) - 1) as u32;
        let yc = y.clamp(0, i64::from(self.height) - 1) as u32;
        self.get(xc, yc)
    }
}
