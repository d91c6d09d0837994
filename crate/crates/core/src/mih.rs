//! Exact Hamming-radius search over 64-bit codes by multi-index hashing.
//!
//! Each code is cut into four 16-bit bands with one table per band. If two
//! codes are within distance `r`, at least one band differs in at most
//! `r / 4` bits (pigeonhole), so probing every band value within that
//! sub-radius and verifying the candidates finds all matches and nothing
//! else. For `r <= 3` the probes are exact band lookups.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::Error;

const BANDS: usize = 4;
const BAND_BITS: u32 = 16;

/// Largest supported query radius.
pub const MAX_RADIUS: u32 = 8;

#[derive(Debug, Clone, Default)]
pub struct MultiIndex {
    codes: Vec<u64>,
    tables: [BTreeMap<u16, Vec<u32>>; BANDS],
}

fn band(code: u64, b: usize) -> u16 {
    (code >> (BAND_BITS as usize * b)) as u16
}

/// Calls `f` with every 16-bit value within Hamming distance `radius` of
/// `center`.
fn for_each_neighbor(center: u16, radius: u32, f: &mut impl FnMut(u16)) {
    fn go(value: u16, from: u32, left: u32, f: &mut impl FnMut(u16)) {
        f(value);
        if left == 0 {
            return;
        }
        for bit in from..BAND_BITS {
            go(value ^ (1 << bit), bit + 1, left - 1, f);
        }
    }
    go(center, 0, radius, f);
}

impl MultiIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_codes(codes: impl IntoIterator<Item = u64>) -> Self {
        let mut index = Self::new();
        for code in codes {
            index.insert(code);
        }
        index
    }

    /// Adds a code and returns its position.
    pub fn insert(&mut self, code: u64) -> usize {
        let pos = self.codes.len();
        for (b, table) in self.tables.iter_mut().enumerate() {
            table.entry(band(code, b)).or_default().push(pos as u32);
        }
        self.codes.push(code);
        pos
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn code(&self, pos: usize) -> u64 {
        self.codes[pos]
    }

    /// Positions of all codes within `radius` of `probe`, with their
    /// distances, sorted by `(distance, position)`.
    pub fn query(&self, probe: u64, radius: u32) -> Result<Vec<(usize, u32)>, Error> {
        if radius > MAX_RADIUS {
            return Err(Error::InvalidInput(format!("radius {radius} exceeds {MAX_RADIUS}")));
        }
        let sub = radius / BANDS as u32;
        let mut candidates = Vec::new();
        for (b, table) in self.tables.iter().enumerate() {
            for_each_neighbor(band(probe, b), sub, &mut |value| {
                if let Some(hits) = table.get(&value) {
                    candidates.extend_from_slice(hits);
                }
            });
        }
        candidates.sort_unstable();
        candidates.dedup();
        let mut out: Vec<(usize, u32)> = candidates
            .into_iter()
            .map(|pos| (pos as usize, (self.codes[pos as usize] ^ probe).count_ones()))
            .filter(|&(_, d)| d <= radius)
            .collect();
        out.sort_unstable_by_key(|&(pos, d)| (d, pos));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_scan(codes: &[u64], probe: u64, radius: u32) -> Vec<(usize, u32)> {
        let mut out: Vec<_> = codes
            .iter()
            .enumerate()
            .map(|(i, c)| (i, (c ^ probe).count_ones()))
            .filter(|&(_, d)| d <= radius)
            .collect();
        out.sort_unstable_by_key(|&(i, d)| (d, i));
        out
    }

    #[test]
    fn neighbor_enumeration_counts() {
        for (r, expected) in [(0, 1), (1, 17), (2, 1 + 16 + 120)] {
            let mut n = 0;
            for_each_neighbor(0xbeef, r, &mut |_| n += 1);
            assert_eq!(n, expected);
        }
    }

    #[test]
    fn exact_and_one_bit_off() {
        let index = MultiIndex::from_codes([0xdead_beef_0000_0001u64, 42]);
        assert_eq!(index.query(42, 0).unwrap(), vec![(1, 0)]);
        assert!(index.query(43, 0).unwrap().is_empty());
        assert_eq!(index.query(43, 1).unwrap(), vec![(1, 1)]);
        assert!(index.query(0, 9).is_err());
    }

    #[test]
    fn agrees_with_linear_scan_up_to_radius_8() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base: Vec<u64> = (0..64).map(|_| rng.random()).collect();
        // Plant near neighbours so that larger radii have something to find.
        let mut codes = base.clone();
        for &c in &base {
            for _ in 0..8 {
                let flips = rng.random_range(0..10);
                let mut v = c;
                for _ in 0..flips {
                    v ^= 1 << rng.random_range(0..64);
                }
                codes.push(v);
            }
        }
        let index = MultiIndex::from_codes(codes.iter().copied());
        for radius in 0..=MAX_RADIUS {
            for &probe in base.iter().take(16) {
                assert_eq!(index.query(probe, radius).unwrap(), linear_scan(&codes, probe, radius));
            }
        }
    }
}
