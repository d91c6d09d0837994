//! Persistent hash cache.
//!
//! Little-endian binary layout:
//!
//! ```text
//! magic        8 bytes  "PHCACHE1"
//! version      u32      1 = keyed by (id, byte size)
//!                       2 = additionally stores a SHA-256 of the file bytes
//! mode         u8       6 (paper6) or 8 (full8)
//! count        u64
//! per record:
//!   id_len     u16
//!   id         id_len bytes, UTF-8
//!   byte_size  u64
//!   digest     32 bytes (version 2 only)
//!   hashes     mode x u64, in fixed transform order
//! ```
//!
//! A file with a different version or mode than requested is ignored with a
//! warning rather than treated as an error.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use dedup_scan_core::{AugmentMode, AugmentedHashSet, PerceptualHash};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PHCACHE1";
pub const VERSION: u32 = 1;
pub const VERSION_STRICT: u32 = 2;

pub type Digest = [u8; 32];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub byte_size: u64,
    pub digest: Option<Digest>,
    pub hashes: Vec<PerceptualHash>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashCache {
    mode: AugmentMode,
    strict: bool,
    entries: BTreeMap<String, CacheEntry>,
}

impl HashCache {
    pub fn new(mode: AugmentMode, strict: bool) -> Self {
        Self { mode, strict, entries: BTreeMap::new() }
    }

    pub fn mode(&self) -> AugmentMode {
        self.mode
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn version(&self) -> u32 {
        if self.strict {
            VERSION_STRICT
        } else {
            VERSION
        }
    }

    /// Returns the cached hash set if the key matches. `digest` is only
    /// consulted for strict caches.
    pub fn lookup(
        &self,
        id: &str,
        byte_size: u64,
        digest: Option<&Digest>,
    ) -> Option<AugmentedHashSet> {
        let entry = self.entries.get(id)?;
        if entry.byte_size != byte_size {
            return None;
        }
        if self.strict && entry.digest.as_ref() != digest {
            return None;
        }
        AugmentedHashSet::from_hashes(id, self.mode, &entry.hashes).ok()
    }

    pub fn insert(&mut self, set: &AugmentedHashSet, byte_size: u64, digest: Option<Digest>) {
        let hashes = set.hashes.iter().map(|(_, h)| *h).collect();
        self.entries.insert(set.id.clone(), CacheEntry { byte_size, digest, hashes });
    }

    /// Loads `path`. A missing file gives an empty cache; an incompatible one
    /// gives an empty cache and a warning.
    pub fn load(path: &Path, mode: AugmentMode, strict: bool) -> Result<(Self, Option<String>)> {
        let empty = Self::new(mode, strict);
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok((empty, None)),
            Err(e) => return Err(Error::io(path, e)),
        };
        match Self::decode(&mut bytes.as_slice(), mode, strict) {
            Ok(cache) => Ok((cache, None)),
            Err(reason) => {
                Ok((empty, Some(format!("ignoring hash cache {}: {reason}", path.display()))))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut buf = Vec::new();
        self.encode(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn encode(&self, out: &mut impl Write) -> io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&self.version().to_le_bytes())?;
        out.write_all(&[self.mode.len() as u8])?;
        out.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for (id, entry) in &self.entries {
            let id_len = u16::try_from(id.len()).map_err(|_| {
                io::Error::new(io::ErrorKind::InvalidInput, "image id longer than 65535 bytes")
            })?;
            out.write_all(&id_len.to_le_bytes())?;
            out.write_all(id.as_bytes())?;
            out.write_all(&entry.byte_size.to_le_bytes())?;
            if self.strict {
                out.write_all(&entry.digest.unwrap_or_default())?;
            }
            for h in &entry.hashes {
                out.write_all(&h.bits().to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Parses a cache, failing with a human-readable reason on any mismatch.
    pub fn decode(input: &mut impl Read, mode: AugmentMode, strict: bool) -> Result<Self, String> {
        let mut magic = [0u8; 8];
        read(input, &mut magic)?;
        if &magic != MAGIC {
            return Err("bad magic".into());
        }
        let version = u32::from_le_bytes(array(input)?);
        let mut cache = Self::new(mode, strict);
        if version != cache.version() {
            return Err(format!("format version {version}, expected {}", cache.version()));
        }
        let [tag] = array::<1>(input)?;
        if usize::from(tag) != mode.len() {
            return Err(format!("mode tag {tag}, expected {}", mode.len()));
        }
        let count = u64::from_le_bytes(array(input)?);
        for _ in 0..count {
            let id_len = u16::from_le_bytes(array(input)?) as usize;
            let mut id = vec![0u8; id_len];
            read(input, &mut id)?;
            let id = String::from_utf8(id).map_err(|_| "non-UTF-8 image id".to_string())?;
            let byte_size = u64::from_le_bytes(array(input)?);
            let digest = if strict { Some(array::<32>(input)?) } else { None };
            let hashes = (0..mode.len())
                .map(|_| array(input).map(|b| PerceptualHash::from_bits(u64::from_le_bytes(b))))
                .collect::<Result<Vec<_>, _>>()?;
            cache.entries.insert(id, CacheEntry { byte_size, digest, hashes });
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest).map_err(|e| e.to_string())? != 0 {
            return Err("trailing bytes".into());
        }
        Ok(cache)
    }
}

fn read(input: &mut impl Read, buf: &mut [u8]) -> Result<(), String> {
    input.read_exact(buf).map_err(|_| "truncated file".to_string())
}

fn array<const K: usize>(input: &mut impl Read) -> Result<[u8; K], String> {
    let mut buf = [0u8; K];
    read(input, &mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(id: &str, seed: u64, mode: AugmentMode) -> AugmentedHashSet {
        let hashes: Vec<_> = (0..mode.len() as u64)
            .map(|i| PerceptualHash::from_bits(seed.wrapping_mul(0x9e37_79b9).wrapping_add(i)))
            .collect();
        AugmentedHashSet::from_hashes(id, mode, &hashes).unwrap()
    }

    #[test]
    fn header_layout() {
        let mut cache = HashCache::new(AugmentMode::Paper6, false);
        cache.insert(&set("a.png", 1, AugmentMode::Paper6), 77, None);
        let mut buf = Vec::new();
        cache.encode(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"PHCACHE1");
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        assert_eq!(buf[12], 6);
        assert_eq!(&buf[13..21], &1u64.to_le_bytes());
        assert_eq!(&buf[21..23], &5u16.to_le_bytes());
        assert_eq!(&buf[23..28], b"a.png");
        assert_eq!(&buf[28..36], &77u64.to_le_bytes());
        assert_eq!(buf.len(), 36 + 6 * 8);
    }

    #[test]
    fn mismatches_are_rejected_with_reasons() {
        let mut cache = HashCache::new(AugmentMode::Paper6, false);
        cache.insert(&set("a", 1, AugmentMode::Paper6), 1, None);
        let mut buf = Vec::new();
        cache.encode(&mut buf).unwrap();
        assert!(HashCache::decode(&mut buf.as_slice(), AugmentMode::Full8, false)
            .unwrap_err()
            .contains("mode"));
        assert!(HashCache::decode(&mut buf.as_slice(), AugmentMode::Paper6, true)
            .unwrap_err()
            .contains("version"));
        assert!(HashCache::decode(&mut &buf[..buf.len() - 1], AugmentMode::Paper6, false).is_err());
        assert!(HashCache::decode(&mut &b"PHCACHE2"[..], AugmentMode::Paper6, false).is_err());
    }

    #[test]
    fn lookup_keys() {
        let mut cache = HashCache::new(AugmentMode::Paper6, true);
        let s = set("a", 3, AugmentMode::Paper6);
        cache.insert(&s, 10, Some([1; 32]));
        assert_eq!(cache.lookup("a", 10, Some(&[1; 32])), Some(s));
        assert_eq!(cache.lookup("a", 11, Some(&[1; 32])), None);
        assert_eq!(cache.lookup("a", 10, Some(&[2; 32])), None);
        assert_eq!(cache.lookup("b", 10, Some(&[1; 32])), None);
    }

    #[test]
    fn missing_file_is_empty_and_garbage_warns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.phcache");
        let (cache, warning) = HashCache::load(&path, AugmentMode::Paper6, false).unwrap();
        assert!(cache.is_empty() && warning.is_none());
        std::fs::write(&path, b"nonsense").unwrap();
        let (cache, warning) = HashCache::load(&path, AugmentMode::Paper6, false).unwrap();
        assert!(cache.is_empty() && warning.is_some());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(
            records in proptest::collection::btree_map("[a-z0-9_.]{1,12}", (any::<u64>(), any::<u64>(), any::<[u8; 32]>()), 0..20),
            full in any::<bool>(),
            strict in any::<bool>(),
        ) {
            let mode = if full { AugmentMode::Full8 } else { AugmentMode::Paper6 };
            let mut cache = HashCache::new(mode, strict);
            for (id, (size, seed, digest)) in &records {
                cache.insert(&set(id, *seed, mode), *size, strict.then_some(*digest));
            }
            let mut buf = Vec::new();
            cache.encode(&mut buf).unwrap();
            let back = HashCache::decode(&mut buf.as_slice(), mode, strict).unwrap();
            prop_assert_eq!(back, cache);
        }
    }
}
