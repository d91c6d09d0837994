//! Hash to image multimap and exact-collision edges.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::mih::MultiIndex;
use crate::{AugmentedHashSet, Error, PerceptualHash, Transform};

/// One `(image, transform)` occurrence of a hash.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct HashEntry {
    pub id: String,
    pub split: String,
    pub transform: Transform,
}

/// Multimap from hash to the images (and transforms) that produced it.
///
/// Buckets iterate in hash order and entries within a bucket in
/// `(id, split, transform)` order, so everything derived from the index is
/// deterministic. Identity hashes are additionally kept in a
/// [`MultiIndex`] for Hamming-radius queries.
#[derive(Debug, Clone, Default)]
pub struct HashIndex {
    buckets: BTreeMap<PerceptualHash, Vec<HashEntry>>,
    ids: BTreeSet<String>,
    entries: usize,
    identities: MultiIndex,
    identity_ids: Vec<String>,
}

impl HashIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds every hash of `set`, tagged with `split`. Image ids must be unique
    /// across the whole index.
    pub fn insert(&mut self, split: &str, set: &AugmentedHashSet) -> Result<(), Error> {
        if !self.ids.insert(set.id.clone()) {
            return Err(Error::InvalidInput(format!("duplicate image id {:?}", set.id)));
        }
        for &(transform, hash) in &set.hashes {
            let bucket = self.buckets.entry(hash).or_default();
            let entry = HashEntry { id: set.id.clone(), split: split.into(), transform };
            let at = bucket.partition_point(|e| *e < entry);
            bucket.insert(at, entry);
            self.entries += 1;
        }
        self.identities.insert(set.identity().bits());
        self.identity_ids.push(set.id.clone());
        Ok(())
    }

    /// Total number of `(hash, image, transform)` entries.
    pub fn len(&self) -> usize {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    pub fn image_count(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }

    pub fn get(&self, hash: PerceptualHash) -> &[HashEntry] {
        self.buckets.get(&hash).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn buckets(&self) -> impl Iterator<Item = (PerceptualHash, &[HashEntry])> {
        self.buckets.iter().map(|(h, v)| (*h, v.as_slice()))
    }

    /// Images whose identity hash is within `radius` (at most 8) of `probe`,
    /// sorted by `(distance, id)`.
    pub fn hamming_query(
        &self,
        probe: PerceptualHash,
        radius: u32,
    ) -> Result<Vec<(String, u32)>, Error> {
        let mut hits: Vec<(String, u32)> = self
            .identities
            .query(probe.bits(), radius)?
            .into_iter()
            .map(|(pos, d)| (self.identity_ids[pos].clone(), d))
            .collect();
        hits.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
        Ok(hits)
    }
}

/// Indexes a list of hash sets under an empty split tag.
pub fn build_index(sets: &[AugmentedHashSet]) -> Result<HashIndex, Error> {
    let mut index = HashIndex::new();
    for set in sets {
        index.insert("", set)?;
    }
    Ok(index)
}

/// Which bucket co-occupants count as a collision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgePolicy {
    /// At least one side must be an identity hash. Two augmented hashes
    /// matching means the identity hashes match too, so this loses nothing.
    #[default]
    IdentityEndpoint,
    /// Also admit augmented-vs-augmented matches.
    Strict,
}

/// Evidence that two images are duplicates: `witness` applied to `a` gives
/// the same hash as `target` applied to `b` (`target` is the identity unless
/// the edge came from [`EdgePolicy::Strict`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionEdge {
    pub a: String,
    pub b: String,
    pub witness: Transform,
    pub target: Transform,
    pub hash: PerceptualHash,
}

impl CollisionEdge {
    fn pair(&self) -> (String, String) {
        if self.a <= self.b {
            (self.a.clone(), self.b.clone())
        } else {
            (self.b.clone(), self.a.clone())
        }
    }

    // Lower is preferred when one pair collides several ways.
    fn rank(&self) -> (bool, bool, Transform, Transform, PerceptualHash) {
        (self.target != Transform::Identity, self.a > self.b, self.witness, self.target, self.hash)
    }
}

fn orient(x: &HashEntry, y: &HashEntry, hash: PerceptualHash) -> CollisionEdge {
    let (a, b) = match (x.transform == Transform::Identity, y.transform == Transform::Identity) {
        (false, true) => (x, y),
        (true, false) => (y, x),
        _ if x.id <= y.id => (x, y),
        _ => (y, x),
    };
    CollisionEdge {
        a: a.id.clone(),
        b: b.id.clone(),
        witness: a.transform,
        target: b.transform,
        hash,
    }
}

/// One edge per unordered pair of distinct images that share a bucket,
/// sorted by pair. When a pair collides in several ways the edge with an
/// identity target, then with `a < b`, then the smallest witness is kept.
pub fn exact_collisions(index: &HashIndex, policy: EdgePolicy) -> Vec<CollisionEdge> {
    let mut best: BTreeMap<(String, String), CollisionEdge> = BTreeMap::new();
    for (hash, entries) in index.buckets() {
        for (i, x) in entries.iter().enumerate() {
            for y in &entries[i + 1..] {
                if x.id == y.id {
                    continue;
                }
                let admitted = policy == EdgePolicy::Strict
                    || x.transform == Transform::Identity
                    || y.transform == Transform::Identity;
                if !admitted {
                    continue;
                }
                let edge = orient(x, y, hash);
                match best.get_mut(&edge.pair()) {
                    Some(kept) if kept.rank() <= edge.rank() => {}
                    Some(kept) => *kept = edge,
                    None => {
                        best.insert(edge.pair(), edge);
                    }
                }
            }
        }
    }
    best.into_values().collect()
}
