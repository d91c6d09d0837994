//! Perceptual hashing and duplicate detection primitives.
//!
//! This crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation: the DCT-based 64-bit perceptual hash, the geometric
//! augmentations used to catch rotated and flipped copies, the collision
//! index, union-find clustering and multi-index Hamming search.
//!
//! File decoding, caching and reporting live in the `dedup-scan` crate.
//!
//! ```
//! use dedup_scan_core::{compute_phash, RgbImage};
//!
//! let white = RgbImage::filled(300, 300, [255, 255, 255]).unwrap();
//! assert_eq!(compute_phash(&white).bits(), 0x8000_0000_0000_0000);
//! ```

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cluster;
pub mod dct;
mod error;
pub mod image;
pub mod index;
pub mod mih;
pub mod phash;
pub mod transform;

pub use cluster::{cluster, DuplicateCluster, UnionFind};
pub use dct::{dct2d, idct2d, DctBlock, DCT_SIZE};
pub use error::Error;
pub use image::{GrayImage, RgbImage};
pub use index::{build_index, exact_collisions, CollisionEdge, EdgePolicy, HashEntry, HashIndex};
pub use mih::MultiIndex;
pub use phash::{
    compute_phash, low_freq, resize_to_32, threshold_hash, to_grayscale, LowFreqBlock,
    PerceptualHash,
};
pub use transform::{
    apply_transform, augmented_hash_set, augmented_hash_set_fast, fast_path_self_test,
    transform_hash_fast, AugmentMode, AugmentedHashSet, Transform,
};
