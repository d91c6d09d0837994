//! Orthonormal 32x32 DCT-II.
//!
//! The forward transform is written so that it commutes *bit-exactly* with
//! the eight symmetries of the square: mirroring the input negates the odd
//! frequencies exactly, and transposing the input transposes the output
//! exactly. The augmentation fast path and the dedup guarantees rely on this.
//!
//! Mirror exactness comes from the even/odd butterfly: each output is a sum
//! over `x < 16` of `basis * (f[x] ± f[31 - x])`, and reversing the input
//! turns every `f[x] - f[31 - x]` into its exact negation. Transpose
//! exactness comes from averaging the rows-first and columns-first passes,
//! which swap roles under transposition.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::{Error, GrayImage};

/// Side length of the transform.
pub const DCT_SIZE: usize = 32;
const N: usize = DCT_SIZE;
const HALF: usize = N / 2;

/// 32x32 DCT-II coefficients, row-major, indexed `(u, v)` with `u` the
/// vertical (row) frequency and `v` the horizontal (column) frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct DctBlock {
    coefficients: [f64; N * N],
}

impl DctBlock {
    pub fn from_coefficients(coefficients: [f64; N * N]) -> Result<Self, Error> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite DCT coefficient".into()));
        }
        Ok(Self { coefficients })
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.coefficients[u * N + v]
    }

    pub fn coefficients(&self) -> &[f64; N * N] {
        &self.coefficients
    }
}

/// `basis[k][x] = alpha(k) * cos(pi * (2x + 1) * k / 2N)` for `x < N/2`. The
/// other half follows from `basis[k][N-1-x] = (-1)^k basis[k][x]`.
struct Basis([[f64; HALF]; N]);

impl Basis {
    fn new() -> Self {
        let mut table = [[0.0; HALF]; N];
        let dc = libm::sqrt(1.0 / N as f64);
        let ac = libm::sqrt(2.0 / N as f64);
        for (k, row) in table.iter_mut().enumerate() {
            let alpha = if k == 0 { dc } else { ac };
            for (x, cell) in row.iter_mut().enumerate() {
                let angle = PI * ((2 * x + 1) * k) as f64 / (2 * N) as f64;
                *cell = alpha * libm::cos(angle);
            }
        }
        Basis(table)
    }

    fn full(&self, k: usize, x: usize) -> f64 {
        if x < HALF {
            self.0[k][x]
        } else if k.is_multiple_of(2) {
            self.0[k][N - 1 - x]
        } else {
            -self.0[k][N - 1 - x]
        }
    }

    fn forward(&self, input: &[f64; N], output: &mut [f64; N]) {
        let mut even = [0.0; HALF];
        let mut odd = [0.0; HALF];
        for x in 0..HALF {
            even[x] = input[x] + input[N - 1 - x];
            odd[x] = input[x] - input[N - 1 - x];
        }
        for (k, out) in output.iter_mut().enumerate() {
            let folded = if k.is_multiple_of(2) { &even } else { &odd };
            let mut acc = 0.0;
            for (b, f) in self.0[k][..HALF].iter().zip(folded) {
                acc += b * f;
            }
            *out = acc;
        }
    }

    fn inverse(&self, input: &[f64; N], output: &mut [f64; N]) {
        for (x, out) in output.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, coeff) in input.iter().enumerate() {
                acc += self.full(k, x) * coeff;
            }
            *out = acc;
        }
    }
}

type Grid = [f64; N * N];

fn rows(grid: &Grid, f: impl Fn(&[f64; N], &mut [f64; N])) -> Grid {
    let mut out = [0.0; N * N];
    let mut line = [0.0; N];
    let mut res = [0.0; N];
    for r in 0..N {
        line.copy_from_slice(&grid[r * N..(r + 1) * N]);
        f(&line, &mut res);
        out[r * N..(r + 1) * N].copy_from_slice(&res);
    }
    out
}

fn cols(grid: &Grid, f: impl Fn(&[f64; N], &mut [f64; N])) -> Grid {
    let mut out = [0.0; N * N];
    let mut line = [0.0; N];
    let mut res = [0.0; N];
    for c in 0..N {
        for r in 0..N {
            line[r] = grid[r * N + c];
        }
        f(&line, &mut res);
        for r in 0..N {
            out[r * N + c] = res[r];
        }
    }
    out
}

pub(crate) fn forward_grid(grid: &Grid) -> DctBlock {
    let basis = Basis::new();
    let fwd = |i: &[f64; N], o: &mut [f64; N]| basis.forward(i, o);
    let rows_first = cols(&rows(grid, fwd), fwd);
    let cols_first = rows(&cols(grid, fwd), fwd);
    let mut coefficients = [0.0; N * N];
    for (i, c) in coefficients.iter_mut().enumerate() {
        *c = (rows_first[i] + cols_first[i]) * 0.5;
    }
    DctBlock { coefficients }
}

/// Forward 2D DCT-II of a 32x32 luminance image.
pub fn dct2d(img: &GrayImage) -> Result<DctBlock, Error> {
    if img.width() != N || img.height() != N {
        return Err(Error::InvalidInput(format!(
            "DCT input must be {N}x{N}, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let mut grid = [0.0; N * N];
    grid.copy_from_slice(img.pixels());
    Ok(forward_grid(&grid))
}

/// Inverse of [`dct2d`]. Returns the raw row-major samples; they are not
/// clamped to `[0, 255]`.
pub fn idct2d(block: &DctBlock) -> Vec<f64> {
    let basis = Basis::new();
    let inv = |i: &[f64; N], o: &mut [f64; N]| basis.inverse(i, o);
    rows(&cols(&block.coefficients, inv), inv).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Textbook quadruple sum, written independently of the basis table.
    fn naive_dct(input: &[f64]) -> Vec<f64> {
        let n = N as f64;
        let alpha = |k: usize| if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        let mut out = vec![0.0; N * N];
        for u in 0..N {
            for v in 0..N {
                let mut acc = 0.0;
                for y in 0..N {
                    for x in 0..N {
                        acc += input[y * N + x]
                            * ((2 * y + 1) as f64 * u as f64 * PI / (2.0 * n)).cos()
                            * ((2 * x + 1) as f64 * v as f64 * PI / (2.0 * n)).cos();
                    }
                }
                out[u * N + v] = alpha(u) * alpha(v) * acc;
            }
        }
        out
    }

    fn random_image(rng: &mut ChaCha8Rng) -> GrayImage {
        let px = (0..N * N).map(|_| rng.random_range(0.0..=255.0)).collect();
        GrayImage::new(N, N, px).unwrap()
    }

    #[test]
    fn constant_image_has_only_dc() {
        for c in [0.0, 1.0, 64.0, 200.5] {
            let block = dct2d(&GrayImage::filled(N, N, c).unwrap()).unwrap();
            assert!((block.get(0, 0) - 32.0 * c).abs() < 1e-9);
            for i in 1..N * N {
                assert!(
                    block.coefficients()[i].abs() < 1e-9,
                    "coef {i} = {}",
                    block.coefficients()[i]
                );
            }
        }
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let img = random_image(&mut rng);
            let fast = dct2d(&img).unwrap();
            let slow = naive_dct(img.pixels());
            for (a, b) in fast.coefficients().iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = random_image(&mut rng);
        let back = idct2d(&dct2d(&img).unwrap());
        for (a, b) in img.pixels().iter().zip(&back) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn rejects_wrong_size() {
        assert!(dct2d(&GrayImage::filled(31, 32, 1.0).unwrap()).is_err());
    }

    #[test]
    fn mirror_and_transpose_are_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng);
        let px = img.pixels();
        let mut mirrored = [0.0; N * N];
        let mut transposed = [0.0; N * N];
        for y in 0..N {
            for x in 0..N {
                mirrored[y * N + x] = px[y * N + (N - 1 - x)];
                transposed[y * N + x] = px[x * N + y];
            }
        }
        let mut grid = [0.0; N * N];
        grid.copy_from_slice(px);
        let base = forward_grid(&grid);
        let m = forward_grid(&mirrored);
        let t = forward_grid(&transposed);
        for u in 0..N {
            for v in 0..N {
                let sign = if v % 2 == 0 { 1.0 } else { -1.0 };
                assert_eq!(m.get(u, v), sign * base.get(u, v));
                assert_eq!(t.get(u, v), base.get(v, u));
            }
        }
    }
}
