//! The 64-bit DCT perceptual hash.
//!
//! `hash = threshold(low_freq(dct(resize_32(gray(img)))))`:
//! BT.601 luma, area-average resize straight to 32x32, orthonormal DCT-II,
//! the 8x8 lowest frequencies, then one bit per coefficient that lies
//! strictly above the mean of all 64 (DC included).

use alloc::vec::Vec;
use core::fmt;

use crate::dct::{self, DCT_SIZE};
use crate::{Error, GrayImage, RgbImage};

/// Side length of the retained low-frequency block.
pub const LOW_FREQ_SIZE: usize = 8;
const L: usize = LOW_FREQ_SIZE;
const N: usize = DCT_SIZE;

/// Fixed-point scale used while resampling. Sums over integer samples are
/// exact and therefore independent of the order pixels are visited in, which
/// is what makes the resize commute bit-exactly with rotations and flips.
const FIXED_ONE: f64 = (1u64 << 32) as f64;

/// A 64-bit perceptual hash. Bit `63 - (8u + v)` holds the threshold result
/// for low-frequency coefficient `(u, v)`, so `(0, 0)` is the most
/// significant bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PerceptualHash(u64);

impl PerceptualHash {
    pub const fn from_bits(bits: u64) -> Self {
        Self(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub const fn hamming_distance(self, other: Self) -> u32 {
        (self.0 ^ other.0).count_ones()
    }

    /// Whether the bit for low-frequency coefficient `(u, v)` is set.
    pub fn bit(self, u: usize, v: usize) -> bool {
        self.0 >> (63 - (L * u + v)) & 1 == 1
    }
}

impl fmt::Display for PerceptualHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl From<u64> for PerceptualHash {
    fn from(bits: u64) -> Self {
        Self(bits)
    }
}

/// The top-left 8x8 corner of a [`dct::DctBlock`], row-major, `(0, 0)` = DC.
#[derive(Debug, Clone, PartialEq)]
pub struct LowFreqBlock {
    coefficients: [f64; L * L],
}

impl LowFreqBlock {
    pub fn from_coefficients(coefficients: [f64; L * L]) -> Result<Self, Error> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        Ok(Self { coefficients })
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.coefficients[u * L + v]
    }

    pub fn coefficients(&self) -> &[f64; L * L] {
        &self.coefficients
    }

    /// Arithmetic mean of all 64 coefficients, summed in row-major order.
    pub fn mean(&self) -> f64 {
        self.coefficients.iter().sum::<f64>() / (L * L) as f64
    }

    pub(crate) fn map(&self, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut coefficients = [0.0; L * L];
        for u in 0..L {
            for v in 0..L {
                coefficients[u * L + v] = f(u, v);
            }
        }
        Self { coefficients }
    }
}

/// BT.601 luma: `0.299 R + 0.587 G + 0.114 B`.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let pixels = img.pixels().iter().map(|&p| luma(p)).collect();
    GrayImage::from_parts(img.width(), img.height(), pixels)
}

pub(crate) fn luma([r, g, b]: [u8; 3]) -> f64 {
    let l = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    l.min(255.0)
}

/// For each of the 32 output cells along an axis of `len` source pixels, the
/// source pixels it overlaps and the overlap length in units of 1/32 pixel.
/// Cell `j` spans `[j * len, (j + 1) * len)` in those units and source pixel
/// `x` spans `[32 x, 32 x + 32)`, so every weight is an integer in `1..=32`
/// and the weights of a cell sum to `len`.
fn axis_spans(len: usize) -> Vec<Vec<(usize, u32)>> {
    let n = N as u64;
    let len64 = len as u64;
    (0..n)
        .map(|j| {
            let start = j * len64;
            let end = (j + 1) * len64;
            let first = start / n;
            let last = (end - 1) / n;
            (first..=last)
                .filter_map(|x| {
                    let lo = start.max(x * n);
                    let hi = end.min(x * n + n);
                    (hi > lo).then(|| (x as usize, (hi - lo) as u32))
                })
                .collect()
        })
        .collect()
}

pub(crate) fn resize_grid(img: &GrayImage) -> [f64; N * N] {
    let (w, h) = (img.width(), img.height());
    let fixed: Vec<u64> = img.pixels().iter().map(|&v| (v * FIXED_ONE + 0.5) as u64).collect();
    let xs = axis_spans(w);
    let ys = axis_spans(h);
    let area = (w as u128) * (h as u128);

    let mut out = [0.0; N * N];
    for (i, yspan) in ys.iter().enumerate() {
        for (j, xspan) in xs.iter().enumerate() {
            let mut sum: u128 = 0;
            for &(y, wy) in yspan {
                let row = &fixed[y * w..(y + 1) * w];
                let mut row_sum: u128 = 0;
                for &(x, wx) in xspan {
                    row_sum += u128::from(wx) * u128::from(row[x]);
                }
                sum += u128::from(wy) * row_sum;
            }
            let whole = (sum / area) as f64;
            let frac = (sum % area) as f64 / area as f64;
            out[i * N + j] = (whole + frac) / FIXED_ONE;
        }
    }
    out
}

/// Area-average resample to 32x32: each output pixel is the mean of the
/// source region it covers, with partially covered source pixels weighted by
/// their covered fraction.
pub fn resize_to_32(img: &GrayImage) -> GrayImage {
    let grid = resize_grid(img);
    GrayImage::from_parts(N, N, grid.to_vec())
}

pub fn low_freq(block: &dct::DctBlock) -> LowFreqBlock {
    let mut coefficients = [0.0; L * L];
    for u in 0..L {
        for v in 0..L {
            coefficients[u * L + v] = block.get(u, v);
        }
    }
    LowFreqBlock { coefficients }
}

/// One bit per coefficient, set iff the coefficient is strictly greater than
/// the block mean.
pub fn threshold_hash(block: &LowFreqBlock) -> PerceptualHash {
    let mean = block.mean();
    let bits = block
        .coefficients
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > mean)
        .fold(0u64, |acc, (i, _)| acc | 1 << (63 - i));
    PerceptualHash(bits)
}

pub(crate) fn low_freq_of_gray(gray: &GrayImage) -> LowFreqBlock {
    low_freq(&dct::forward_grid(&resize_grid(gray)))
}

pub fn compute_phash(img: &RgbImage) -> PerceptualHash {
    threshold_hash(&low_freq_of_gray(&to_grayscale(img)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dct::dct2d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rgb_pixel(p: [u8; 3]) -> f64 {
        to_grayscale(&RgbImage::filled(1, 1, p).unwrap()).pixels()[0]
    }

    #[test]
    fn grayscale_weights() {
        assert_eq!(rgb_pixel([255, 255, 255]), 255.0);
        assert_eq!(rgb_pixel([0, 0, 0]), 0.0);
        assert!((rgb_pixel([255, 0, 0]) - 76.245).abs() < 1e-9);
        assert!((rgb_pixel([0, 255, 0]) - 149.685).abs() < 1e-9);
        assert!((rgb_pixel([0, 0, 255]) - 29.07).abs() < 1e-9);
    }

    // Floating-point fractional coverage, computed per output pixel without
    // any of the integer span machinery.
    fn box_oracle(img: &GrayImage) -> Vec<f64> {
        let (w, h) = (img.width() as f64, img.height() as f64);
        let sx = w / 32.0;
        let sy = h / 32.0;
        let mut out = vec![0.0; 1024];
        for i in 0..32 {
            for j in 0..32 {
                let (y0, y1) = (i as f64 * sy, (i + 1) as f64 * sy);
                let (x0, x1) = (j as f64 * sx, (j + 1) as f64 * sx);
                let mut acc = 0.0;
                for y in 0..img.height() {
                    let cy = (y1.min(y as f64 + 1.0) - y0.max(y as f64)).max(0.0);
                    if cy == 0.0 {
                        continue;
                    }
                    for x in 0..img.width() {
                        let cx = (x1.min(x as f64 + 1.0) - x0.max(x as f64)).max(0.0);
                        acc += cx * cy * img.get(x, y);
                    }
                }
                out[i * 32 + j] = acc / (sx * sy);
            }
        }
        out
    }

    fn random_gray(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
        GrayImage::new(w, h, (0..w * h).map(|_| rng.random_range(0.0..=255.0)).collect()).unwrap()
    }

    #[test]
    fn resize_preserves_constants() {
        for (w, h, c) in [(1, 1, 7.0), (300, 300, 128.0), (45, 17, 3.25), (32, 32, 255.0)] {
            let out = resize_to_32(&GrayImage::filled(w, h, c).unwrap());
            assert!(out.pixels().iter().all(|&v| (v - c).abs() < 1e-9));
        }
    }

    #[test]
    fn resize_integer_ratio_is_block_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_gray(&mut rng, 64, 64);
        let out = resize_to_32(&img);
        for i in 0..32 {
            for j in 0..32 {
                let mean = (img.get(2 * j, 2 * i)
                    + img.get(2 * j + 1, 2 * i)
                    + img.get(2 * j, 2 * i + 1)
                    + img.get(2 * j + 1, 2 * i + 1))
                    / 4.0;
                assert!((out.get(j, i) - mean).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn resize_matches_fractional_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (w, h) in [(300, 300), (37, 91), (5, 3)] {
            let img = random_gray(&mut rng, w, h);
            let fast = resize_to_32(&img);
            for (a, b) in fast.pixels().iter().zip(box_oracle(&img)) {
                assert!((a - b).abs() < 1e-9, "{w}x{h}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn low_freq_is_top_left_corner() {
        let mut coeffs = [0.0; 1024];
        for u in 0..32 {
            for v in 0..32 {
                coeffs[u * 32 + v] = (100 * u + v) as f64;
            }
        }
        let block = crate::DctBlock::from_coefficients(coeffs).unwrap();
        let low = low_freq(&block);
        for u in 0..8 {
            for v in 0..8 {
                assert_eq!(low.get(u, v), (100 * u + v) as f64);
            }
        }
    }

    #[test]
    fn constant_dct_low_freq_has_only_dc() {
        let block = dct2d(&GrayImage::filled(32, 32, 10.0).unwrap()).unwrap();
        let low = low_freq(&block);
        assert!((low.get(0, 0) - 320.0).abs() < 1e-9);
        assert!(low.coefficients()[1..].iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn threshold_examples() {
        let zero = LowFreqBlock::from_coefficients([0.0; 64]).unwrap();
        assert_eq!(threshold_hash(&zero).bits(), 0);

        let mut ramp = [0.0; 64];
        for (i, c) in ramp.iter_mut().enumerate() {
            *c = i as f64;
        }
        let ramp = LowFreqBlock::from_coefficients(ramp).unwrap();
        assert_eq!(ramp.mean(), 31.5);
        assert_eq!(threshold_hash(&ramp).bits(), 0x0000_0000_FFFF_FFFF);

        let mut dc_only = [0.0; 64];
        dc_only[0] = 640.0;
        let dc_only = LowFreqBlock::from_coefficients(dc_only).unwrap();
        let hash = threshold_hash(&dc_only);
        assert_eq!(hash.bits(), 0x8000_0000_0000_0000);
        assert!(hash.bit(0, 0));
        assert!(!hash.bit(7, 7));
    }

    #[test]
    fn constant_images() {
        for v in [1u8, 64, 128, 255] {
            let img = RgbImage::filled(300, 300, [v, v, v]).unwrap();
            assert_eq!(compute_phash(&img).bits(), 0x8000_0000_0000_0000);
        }
        let black = RgbImage::filled(300, 300, [0, 0, 0]).unwrap();
        assert_eq!(compute_phash(&black).bits(), 0);
    }

    #[test]
    fn display_is_fixed_width_hex() {
        assert_eq!(PerceptualHash::from_bits(0xab).to_string(), "00000000000000ab");
    }
}
