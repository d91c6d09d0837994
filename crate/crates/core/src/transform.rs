//! Geometric augmentations and augmented hash sets.
//!
//! Duplicates are caught up to the symmetries of the square. The default
//! [`AugmentMode::Paper6`] set is identity, the three quarter-turn rotations
//! and the two axis flips; [`AugmentMode::Full8`] adds both diagonal flips to
//! get the whole dihedral group. The six-element set is not closed under
//! composition (a horizontal flip after a quarter turn is a diagonal flip),
//! which is why clustering takes the transitive closure of collisions.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::phash::{self, LowFreqBlock, PerceptualHash};
use crate::{Error, GrayImage, RgbImage};

/// An element of the dihedral group of the square. Rotations are clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Transform {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    /// Mirror left-right.
    FlipH,
    /// Mirror top-bottom.
    FlipV,
    /// Transpose (mirror about the main diagonal).
    FlipDiag,
    /// Mirror about the anti-diagonal.
    FlipAnti,
}

impl Transform {
    /// All eight, in the fixed order used for hash sets and cache records.
    pub const ALL: [Transform; 8] = [
        Transform::Identity,
        Transform::Rot90,
        Transform::Rot180,
        Transform::Rot270,
        Transform::FlipH,
        Transform::FlipV,
        Transform::FlipDiag,
        Transform::FlipAnti,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::Rot90 => "rot90",
            Transform::Rot180 => "rot180",
            Transform::Rot270 => "rot270",
            Transform::FlipH => "flip_h",
            Transform::FlipV => "flip_v",
            Transform::FlipDiag => "flip_diag",
            Transform::FlipAnti => "flip_anti",
        }
    }

    /// Whether the transform swaps the two axes (and so needs a square
    /// input to keep the image shape).
    pub fn swaps_axes(self) -> bool {
        matches!(
            self,
            Transform::Rot90 | Transform::Rot270 | Transform::FlipDiag | Transform::FlipAnti
        )
    }

    /// Source pixel `(row, col)` that lands on output `(y, x)` in an
    /// `h` x `w` image.
    fn source(self, y: usize, x: usize, w: usize, h: usize) -> (usize, usize) {
        match self {
            Transform::Identity => (y, x),
            Transform::Rot90 => (h - 1 - x, y),
            Transform::Rot180 => (h - 1 - y, w - 1 - x),
            Transform::Rot270 => (x, w - 1 - y),
            Transform::FlipH => (y, w - 1 - x),
            Transform::FlipV => (h - 1 - y, x),
            Transform::FlipDiag => (x, y),
            Transform::FlipAnti => (h - 1 - x, w - 1 - y),
        }
    }

    /// How the transform acts on DCT coefficients:
    /// `out(u, v) = (-1)^(u*neg_u + v*neg_v) * in(transpose ? (v, u) : (u, v))`.
    fn dct_action(self) -> (bool, bool, bool) {
        match self {
            Transform::Identity => (false, false, false),
            Transform::Rot90 => (true, false, true),
            Transform::Rot180 => (false, true, true),
            Transform::Rot270 => (true, true, false),
            Transform::FlipH => (false, false, true),
            Transform::FlipV => (false, true, false),
            Transform::FlipDiag => (true, false, false),
            Transform::FlipAnti => (true, true, true),
        }
    }

    /// The transform equal to applying `self` first and then `next`.
    pub fn then(self, next: Transform) -> Transform {
        // D4 acts faithfully on the labelled 3x3 grid, so the composite is
        // whichever element produces the same relabelling.
        let probe: Vec<u8> = (0..9).collect();
        let once = permute(&probe, 3, 3, self).expect("square probe");
        let twice = permute(&once, 3, 3, next).expect("square probe");
        Transform::ALL
            .into_iter()
            .find(|t| permute(&probe, 3, 3, *t).expect("square probe") == twice)
            .expect("D4 is closed under composition")
    }

    pub fn inverse(self) -> Transform {
        match self {
            Transform::Rot90 => Transform::Rot270,
            Transform::Rot270 => Transform::Rot90,
            other => other,
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Transform::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown transform {s:?}")))
    }
}

/// Which transforms an augmented hash set covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AugmentMode {
    /// Identity, the three rotations and the two axis flips.
    #[default]
    Paper6,
    /// The full dihedral group.
    Full8,
}

impl AugmentMode {
    pub fn transforms(self) -> &'static [Transform] {
        match self {
            AugmentMode::Paper6 => &Transform::ALL[..6],
            AugmentMode::Full8 => &Transform::ALL,
        }
    }

    /// Number of transforms; also the tag stored in cache files.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        self.transforms().len()
    }

    pub fn from_len(len: usize) -> Option<Self> {
        match len {
            6 => Some(AugmentMode::Paper6),
            8 => Some(AugmentMode::Full8),
            _ => None,
        }
    }

    pub fn contains(self, t: Transform) -> bool {
        self.transforms().contains(&t)
    }

    pub fn name(self) -> &'static str {
        match self {
            AugmentMode::Paper6 => "paper6",
            AugmentMode::Full8 => "full8",
        }
    }
}

impl FromStr for AugmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper6" => Ok(AugmentMode::Paper6),
            "full8" => Ok(AugmentMode::Full8),
            _ => Err(Error::InvalidInput(format!("unknown augment mode {s:?}"))),
        }
    }
}

fn permute<T: Copy>(data: &[T], w: usize, h: usize, t: Transform) -> Result<Vec<T>, Error> {
    if t.swaps_axes() && w != h {
        return Err(Error::Unsupported(format!("{t} needs a square image, got {w}x{h}")));
    }
    let mut out = Vec::with_capacity(data.len());
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = t.source(y, x, w, h);
            out.push(data[sy * w + sx]);
        }
    }
    Ok(out)
}

/// Lossless pixel permutation. Axis-swapping transforms reject non-square
/// input with [`Error::Unsupported`]; the axis flips accept any shape.
pub fn apply_transform(img: &RgbImage, t: Transform) -> Result<RgbImage, Error> {
    let pixels = permute(img.pixels(), img.width(), img.height(), t)?;
    RgbImage::new(img.width(), img.height(), pixels)
}

fn transform_gray(img: &GrayImage, t: Transform) -> Result<GrayImage, Error> {
    let pixels = permute(img.pixels(), img.width(), img.height(), t)?;
    Ok(GrayImage::from_parts(img.width(), img.height(), pixels))
}

/// The hashes of one image under every transform of a mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedHashSet {
    pub id: String,
    /// One entry per transform, in [`Transform::ALL`] order.
    pub hashes: Vec<(Transform, PerceptualHash)>,
}

impl AugmentedHashSet {
    /// Builds a set from hashes given in the mode's transform order.
    pub fn from_hashes(
        id: impl Into<String>,
        mode: AugmentMode,
        hashes: &[PerceptualHash],
    ) -> Result<Self, Error> {
        if hashes.len() != mode.len() {
            return Err(Error::InvalidInput(format!(
                "{} mode needs {} hashes, got {}",
                mode.name(),
                mode.len(),
                hashes.len()
            )));
        }
        Ok(Self {
            id: id.into(),
            hashes: mode.transforms().iter().copied().zip(hashes.iter().copied()).collect(),
        })
    }

    pub fn identity(&self) -> PerceptualHash {
        self.hashes[0].1
    }

    pub fn get(&self, t: Transform) -> Option<PerceptualHash> {
        self.hashes.iter().find(|(s, _)| *s == t).map(|(_, h)| *h)
    }

    pub fn contains(&self, hash: PerceptualHash) -> bool {
        self.hashes.iter().any(|(_, h)| *h == hash)
    }

    pub fn mode(&self) -> AugmentMode {
        AugmentMode::from_len(self.hashes.len()).unwrap_or_default()
    }
}

/// Hashes `img` under every transform of `mode` by transforming pixels and
/// rehashing. This is the reference path.
pub fn augmented_hash_set(
    id: impl Into<String>,
    img: &RgbImage,
    mode: AugmentMode,
) -> Result<AugmentedHashSet, Error> {
    if !img.is_square() {
        return Err(Error::Unsupported(format!(
            "augmented hashing needs a square image, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    // Luma is per-pixel, so permuting the gray plane is the same as
    // permuting RGB and converting afterwards.
    let gray = phash::to_grayscale(img);
    let hashes = mode
        .transforms()
        .iter()
        .map(|&t| {
            let moved = transform_gray(&gray, t)?;
            Ok((t, phash::threshold_hash(&phash::low_freq_of_gray(&moved))))
        })
        .collect::<Result<_, Error>>()?;
    Ok(AugmentedHashSet { id: id.into(), hashes })
}

/// Hash of the transformed image, derived from the source's low-frequency
/// block by sign flips and transposition instead of touching pixels.
pub fn transform_hash_fast(block: &LowFreqBlock, t: Transform) -> PerceptualHash {
    phash::threshold_hash(&transform_block(block, t))
}

fn transform_block(block: &LowFreqBlock, t: Transform) -> LowFreqBlock {
    let (transpose, neg_u, neg_v) = t.dct_action();
    block.map(|u, v| {
        let c = if transpose { block.get(v, u) } else { block.get(u, v) };
        let odd = (neg_u && u % 2 == 1) ^ (neg_v && v % 2 == 1);
        if odd {
            -c
        } else {
            c
        }
    })
}

/// Same result as [`augmented_hash_set`], computing one DCT instead of one
/// per transform. Only use it after [`fast_path_self_test`] passed.
pub fn augmented_hash_set_fast(
    id: impl Into<String>,
    img: &RgbImage,
    mode: AugmentMode,
) -> Result<AugmentedHashSet, Error> {
    if !img.is_square() {
        return Err(Error::Unsupported(format!(
            "augmented hashing needs a square image, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let block = phash::low_freq_of_gray(&phash::to_grayscale(img));
    let hashes = mode.transforms().iter().map(|&t| (t, transform_hash_fast(&block, t))).collect();
    Ok(AugmentedHashSet { id: id.into(), hashes })
}

/// Compares the fast path against the pixel path on deterministic synthetic
/// probes for all eight transforms. Returns the number of mismatching
/// `(probe, transform)` pairs; the fast path is only sound when this is 0.
pub fn fast_path_self_test() -> usize {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = move || {
        // xorshift64*
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        (state.wrapping_mul(0x2545_f491_4f6c_dd1d) >> 56) as u8
    };
    let mut mismatches = 0;
    for &side in &[32usize, 37, 64, 100, 300] {
        let raw: Vec<u8> = (0..side * side * 3).map(|_| next()).collect();
        let img = RgbImage::from_raw(side, side, &raw).expect("probe dimensions");
        let slow = augmented_hash_set("probe", &img, AugmentMode::Full8).expect("square probe");
        let fast =
            augmented_hash_set_fast("probe", &img, AugmentMode::Full8).expect("square probe");
        mismatches += slow.hashes.iter().zip(&fast.hashes).filter(|(a, b)| a != b).count();
    }
    mismatches
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute_phash;
    use alloc::vec;

    fn labelled(w: usize, h: usize) -> RgbImage {
        let px = (0..w * h).map(|i| [i as u8, (i >> 8) as u8, 0]).collect();
        RgbImage::new(w, h, px).unwrap()
    }

    #[test]
    fn rot90_is_clockwise() {
        let (a, b, c, d) = ([1, 0, 0], [2, 0, 0], [3, 0, 0], [4, 0, 0]);
        let img = RgbImage::new(2, 2, vec![a, b, c, d]).unwrap();
        let out = apply_transform(&img, Transform::Rot90).unwrap();
        assert_eq!(out.pixels(), &[c, a, d, b]);
    }

    #[test]
    fn identity_is_bitwise_identical() {
        let img = labelled(5, 3);
        assert_eq!(apply_transform(&img, Transform::Identity).unwrap(), img);
    }

    #[test]
    fn rotation_of_non_square_is_unsupported() {
        let img = labelled(4, 3);
        for t in [Transform::Rot90, Transform::Rot180, Transform::Rot270] {
            // Rot180 does not swap axes, so it is fine on any rectangle.
            let res = apply_transform(&img, t);
            assert_eq!(res.is_err(), t.swaps_axes(), "{t}");
        }
        assert!(matches!(apply_transform(&img, Transform::FlipDiag), Err(Error::Unsupported(_))));
        assert!(apply_transform(&img, Transform::FlipH).is_ok());
        assert!(apply_transform(&img, Transform::FlipV).is_ok());
    }

    #[test]
    fn group_laws() {
        use Transform::*;
        assert_eq!(Rot90.then(Rot270), Identity);
        assert_eq!(FlipH.then(FlipH), Identity);
        assert_eq!(Rot90.then(Rot90), Rot180);
        assert_eq!(FlipH.then(FlipV), Rot180);
        for t in Transform::ALL {
            assert_eq!(t.then(t.inverse()), Identity);
        }
        // The six-element set is not closed: flipping a quarter turn gives a
        // diagonal reflection.
        let composite = Rot90.then(FlipH);
        assert!(!AugmentMode::Paper6.contains(composite));
        assert!(matches!(composite, FlipDiag | FlipAnti));
    }

    #[test]
    fn composition_matches_pixels() {
        let img = labelled(6, 6);
        for s in Transform::ALL {
            for t in Transform::ALL {
                let twice = apply_transform(&apply_transform(&img, s).unwrap(), t).unwrap();
                assert_eq!(twice, apply_transform(&img, s.then(t)).unwrap(), "{s} then {t}");
            }
        }
    }

    #[test]
    fn constant_image_sets() {
        let img = RgbImage::filled(30, 30, [90, 90, 90]).unwrap();
        let set = augmented_hash_set("c", &img, AugmentMode::Paper6).unwrap();
        assert_eq!(set.hashes.len(), 6);
        assert!(set.hashes.iter().all(|(_, h)| h.bits() == 0x8000_0000_0000_0000));
        let block = phash::low_freq_of_gray(&phash::to_grayscale(&img));
        for t in Transform::ALL {
            assert_eq!(transform_hash_fast(&block, t).bits(), 0x8000_0000_0000_0000);
        }
    }

    #[test]
    fn rotated_copy_is_in_the_set() {
        let img = labelled(40, 40);
        let rotated = apply_transform(&img, Transform::Rot90).unwrap();
        let set = augmented_hash_set("a", &img, AugmentMode::Paper6).unwrap();
        assert_eq!(set.get(Transform::Rot90), Some(compute_phash(&rotated)));
        assert!(set.contains(compute_phash(&rotated)));
    }

    #[test]
    fn self_test_passes() {
        assert_eq!(fast_path_self_test(), 0);
    }

    #[test]
    fn modes_and_names_parse() {
        for t in Transform::ALL {
            assert_eq!(t.name().parse::<Transform>().unwrap(), t);
        }
        assert_eq!("full8".parse::<AugmentMode>().unwrap().len(), 8);
        assert!("paper7".parse::<AugmentMode>().is_err());
        assert!(AugmentedHashSet::from_hashes("x", AugmentMode::Paper6, &[]).is_err());
    }
}
