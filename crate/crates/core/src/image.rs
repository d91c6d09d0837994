//! Minimal owned image buffers.
//!
//! Both buffers are row-major: pixel `(x, y)` lives at index `y * width + x`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::Error;

/// An 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self, Error> {
        check_dims(width, height, pixels.len())?;
        Ok(Self { width, height, pixels })
    }

    /// Builds an image from interleaved `r, g, b` bytes.
    pub fn from_raw(width: usize, height: usize, raw: &[u8]) -> Result<Self, Error> {
        if !raw.len().is_multiple_of(3) {
            return Err(Error::InvalidInput(format!(
                "raw RGB buffer length {} is not a multiple of 3",
                raw.len()
            )));
        }
        let pixels = raw.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
        Self::new(width, height, pixels)
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, Error> {
        Self::new(width, height, vec![rgb; width.saturating_mul(height)])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    /// Interleaved `r, g, b` bytes.
    pub fn to_raw(&self) -> Vec<u8> {
        self.pixels.iter().flatten().copied().collect()
    }
}

/// A real-valued luminance image with values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, Error> {
        check_dims(width, height, pixels.len())?;
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("luminance {bad} outside [0, 255]")));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, Error> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    // Callers inside the crate guarantee the invariants.
    pub(crate) fn from_parts(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(width * height, pixels.len());
        Self { width, height, pixels }
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<(), Error> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput(format!("zero-sized image ({width}x{height})")));
    }
    match width.checked_mul(height) {
        Some(n) if n == len => Ok(()),
        _ => Err(Error::InvalidInput(format!(
            "{width}x{height} image needs {} pixels, got {len}",
            width.saturating_mul(height)
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_sized_and_mismatched_buffers() {
        assert!(RgbImage::new(0, 4, vec![]).is_err());
        assert!(RgbImage::new(2, 2, vec![[0; 3]; 3]).is_err());
        assert!(RgbImage::from_raw(1, 1, &[1, 2]).is_err());
        assert!(GrayImage::new(1, 1, vec![256.0]).is_err());
        assert!(GrayImage::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn raw_round_trip() {
        let raw: Vec<u8> = (0..12).collect();
        let img = RgbImage::from_raw(2, 2, &raw).unwrap();
        assert_eq!(img.get(1, 1), [9, 10, 11]);
        assert_eq!(img.to_raw(), raw);
    }
}
