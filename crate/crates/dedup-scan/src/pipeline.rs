//! End-to-end dataset procedure: ingest, hash, measure leakage, dedup each
//! split, drop leaked training images, merge and resplit.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use dedup_scan_core::{
    augmented_hash_set, augmented_hash_set_fast, cluster, exact_collisions, fast_path_self_test,
    AugmentMode, AugmentedHashSet, DuplicateCluster, EdgePolicy, HashIndex, PerceptualHash,
    RgbImage,
};
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest as _, Sha256};

use crate::cache::{Digest, HashCache};
use crate::error::{Error, Result};

/// File extensions picked up by [`ingest`] (compared case-insensitively).
pub const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp", "tif", "tiff"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    /// File name relative to the split directory.
    pub id: String,
    pub path: PathBuf,
    pub byte_size: u64,
    pub hashes: Option<AugmentedHashSet>,
}

impl ImageRecord {
    pub fn identity(&self) -> Option<PerceptualHash> {
        self.hashes.as_ref().map(AugmentedHashSet::identity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitManifest {
    pub name: String,
    pub annotations: Option<PathBuf>,
    /// Sorted by id, ids unique.
    pub records: Vec<ImageRecord>,
}

impl SplitManifest {
    pub fn new(name: impl Into<String>, mut records: Vec<ImageRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = records.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidInput(format!("duplicate image id {:?}", w[0].id)));
        }
        Ok(Self { name: name.into(), annotations: None, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    pub fn is_hashed(&self) -> bool {
        self.records.iter().all(|r| r.hashes.is_some())
    }

    fn hash_sets(&self) -> Result<Vec<&AugmentedHashSet>> {
        self.records
            .iter()
            .map(|r| {
                r.hashes.as_ref().ok_or_else(|| {
                    Error::InvalidState(format!("split {:?} is not hashed ({})", self.name, r.id))
                })
            })
            .collect()
    }

    fn renamed(&self, name: String, records: Vec<ImageRecord>) -> Self {
        Self { name, annotations: self.annotations.clone(), records }
    }
}

#[derive(Debug)]
pub struct Ingested {
    pub manifest: SplitManifest,
    pub warnings: Vec<String>,
}

/// Lists the images of `dir` (not recursive). Files whose header cannot be
/// decoded are left out and reported as warnings.
pub fn ingest(name: &str, dir: &Path, annotations: Option<&Path>) -> Result<Ingested> {
    if !dir.is_dir() {
        return Err(Error::InvalidInput(format!("{} is not a directory", dir.display())));
    }
    if let Some(ann) = annotations.filter(|a| !a.is_file()) {
        return Err(Error::InvalidInput(format!("annotation file {} not found", ann.display())));
    }
    let mut candidates = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)));
        if !is_image || !path.is_file() {
            continue;
        }
        let Some(id) = path.file_name().and_then(|n| n.to_str()).map(str::to_owned) else {
            continue;
        };
        candidates.push((id, path));
    }
    candidates.sort();

    let checked: Vec<Result<ImageRecord, String>> = candidates
        .into_par_iter()
        .map(|(id, path)| {
            let byte_size =
                fs::metadata(&path).map_err(|e| format!("{}: {e}", path.display()))?.len();
            image::ImageReader::open(&path)
                .and_then(|r| r.with_guessed_format())
                .map_err(image::ImageError::IoError)
                .and_then(|r| r.into_dimensions())
                .map_err(|e| format!("{}: undecodable image: {e}", path.display()))?;
            Ok(ImageRecord { id, path, byte_size, hashes: None })
        })
        .collect();

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for r in checked {
        match r {
            Ok(rec) => records.push(rec),
            Err(w) => warnings.push(w),
        }
    }
    let mut manifest = SplitManifest::new(name, records)?;
    manifest.annotations = annotations.map(Path::to_path_buf);
    Ok(Ingested { manifest, warnings })
}

#[derive(Debug, Clone)]
pub struct HashOptions {
    pub mode: AugmentMode,
    pub cache_file: Option<PathBuf>,
    pub strict_cache: bool,
    pub workers: usize,
    /// Derive augmented hashes in the DCT domain. Only honoured if the
    /// start-up self-test finds no mismatch.
    pub fast_path: bool,
}

impl Default for HashOptions {
    fn default() -> Self {
        Self {
            mode: AugmentMode::Paper6,
            cache_file: None,
            strict_cache: false,
            workers: 1,
            fast_path: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HashStats {
    pub cache_hits: usize,
    pub computed: usize,
}

#[derive(Debug)]
pub struct Hashed {
    pub manifest: SplitManifest,
    pub stats: HashStats,
    pub warnings: Vec<String>,
}

enum Outcome {
    Hit(AugmentedHashSet, u64, Option<Digest>),
    Computed(AugmentedHashSet, u64, Option<Digest>),
    Failed(String),
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start {workers} workers: {e}")))
}

pub fn decode_rgb(bytes: &[u8]) -> Result<RgbImage> {
    let img = image::load_from_memory(bytes)?.into_rgb8();
    let (w, h) = img.dimensions();
    Ok(RgbImage::from_raw(w as usize, h as usize, img.as_raw())?)
}

fn hash_one(
    rec: &ImageRecord,
    cache: Option<&HashCache>,
    opts: &HashOptions,
    fast: bool,
) -> Outcome {
    let fail = |msg: String| Outcome::Failed(format!("{}: {msg}", rec.path.display()));
    let byte_size = match fs::metadata(&rec.path) {
        Ok(m) => m.len(),
        Err(e) => return fail(e.to_string()),
    };
    if !opts.strict_cache {
        if let Some(set) = cache.and_then(|c| c.lookup(&rec.id, byte_size, None)) {
            return Outcome::Hit(set, byte_size, None);
        }
    }
    let bytes = match fs::read(&rec.path) {
        Ok(b) => b,
        Err(e) => return fail(e.to_string()),
    };
    let digest: Option<Digest> = opts.strict_cache.then(|| Sha256::digest(&bytes).into());
    if opts.strict_cache {
        if let Some(set) = cache.and_then(|c| c.lookup(&rec.id, byte_size, digest.as_ref())) {
            return Outcome::Hit(set, byte_size, digest);
        }
    }
    let img = match decode_rgb(&bytes) {
        Ok(img) => img,
        Err(e) => return fail(e.to_string()),
    };
    let set = if fast {
        augmented_hash_set_fast(rec.id.as_str(), &img, opts.mode)
    } else {
        augmented_hash_set(rec.id.as_str(), &img, opts.mode)
    };
    match set {
        Ok(set) => Outcome::Computed(set, byte_size, digest),
        Err(e) => fail(e.to_string()),
    }
}

/// Fills in every record's augmented hash set, reusing and then rewriting
/// the cache file when one is configured. Records that cannot be decoded or
/// hashed are dropped with a warning. Results do not depend on
/// `opts.workers`.
pub fn hash_split(manifest: SplitManifest, opts: &HashOptions) -> Result<Hashed> {
    let mut warnings = Vec::new();
    let cache = match &opts.cache_file {
        Some(path) => {
            let (cache, warning) = HashCache::load(path, opts.mode, opts.strict_cache)?;
            warnings.extend(warning);
            Some(cache)
        }
        None => None,
    };
    let fast = opts.fast_path && {
        let mismatches = fast_path_self_test();
        if mismatches > 0 {
            warnings.push(format!(
                "fast path disabled: self-test found {mismatches} mismatches against the pixel path"
            ));
        }
        mismatches == 0
    };

    let pool = thread_pool(opts.workers)?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        manifest.records.par_iter().map(|rec| hash_one(rec, cache.as_ref(), opts, fast)).collect()
    });

    let mut stats = HashStats::default();
    let mut fresh = HashCache::new(opts.mode, opts.strict_cache);
    let mut records = Vec::with_capacity(manifest.records.len());
    for (mut rec, outcome) in manifest.records.iter().cloned().zip(outcomes) {
        let (set, size, digest) = match outcome {
            Outcome::Hit(s, n, d) => {
                stats.cache_hits += 1;
                (s, n, d)
            }
            Outcome::Computed(s, n, d) => {
                stats.computed += 1;
                (s, n, d)
            }
            Outcome::Failed(w) => {
                warnings.push(w);
                continue;
            }
        };
        fresh.insert(&set, size, digest);
        rec.byte_size = size;
        rec.hashes = Some(set);
        records.push(rec);
    }
    if let Some(path) = &opts.cache_file {
        fresh.save(path)?;
    }
    Ok(Hashed { manifest: manifest.renamed(manifest.name.clone(), records), stats, warnings })
}

/// How needle and haystack hashes are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Identity hashes on both sides.
    Exact,
    /// Haystack identity hash against every augmented needle hash.
    Augmented,
    /// Any augmented haystack hash against any augmented needle hash.
    AugmentedBoth,
}

/// One comparison of a needle split against a haystack split. A haystack
/// image counts once no matter how many needles it matches, and the
/// percentage is taken over the haystack size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageReport {
    pub needles: String,
    pub haystack: String,
    #[serde(rename = "match")]
    pub match_mode: MatchMode,
    pub haystack_total: usize,
    pub matched: usize,
    /// `matched / haystack_total * 100`, rounded to 2 decimals.
    pub percent: f64,
}

pub fn leakage_percent(matched: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (matched as f64 / total as f64 * 10_000.0).round() / 100.0
}

pub fn detect_leakage(
    needles: &SplitManifest,
    haystack: &SplitManifest,
    mode: MatchMode,
) -> Result<LeakageReport> {
    let needle_sets = needles.hash_sets()?;
    let haystack_sets = haystack.hash_sets()?;
    let targets: HashSet<PerceptualHash> = match mode {
        MatchMode::Exact => needle_sets.iter().map(|s| s.identity()).collect(),
        MatchMode::Augmented | MatchMode::AugmentedBoth => {
            needle_sets.iter().flat_map(|s| s.hashes.iter().map(|(_, h)| *h)).collect()
        }
    };
    let matched = haystack_sets
        .iter()
        .filter(|s| match mode {
            MatchMode::AugmentedBoth => s.hashes.iter().any(|(_, h)| targets.contains(h)),
            _ => targets.contains(&s.identity()),
        })
        .count();
    let augmented = |name: &str, yes: bool| {
        if yes {
            format!("augmented {name}")
        } else {
            name.to_string()
        }
    };
    Ok(LeakageReport {
        needles: augmented(&needles.name, mode != MatchMode::Exact),
        haystack: augmented(&haystack.name, mode == MatchMode::AugmentedBoth),
        match_mode: mode,
        haystack_total: haystack.len(),
        matched,
        percent: leakage_percent(matched, haystack.len()),
    })
}

#[derive(Debug)]
pub struct Dedup {
    pub unique: SplitManifest,
    pub clusters: Vec<DuplicateCluster>,
}

/// Clusters exact and augmented duplicates and keeps one image (the
/// smallest id) per cluster.
pub fn dedup_split(manifest: &SplitManifest, policy: EdgePolicy) -> Result<Dedup> {
    let mut index = HashIndex::new();
    for set in manifest.hash_sets()? {
        index.insert(&manifest.name, set)?;
    }
    let edges = exact_collisions(&index, policy);
    let clusters = cluster(&edges, &manifest.ids())?;
    let removed: HashSet<&str> = clusters.iter().flat_map(|c| c.removed()).collect();
    let records: Vec<ImageRecord> =
        manifest.records.iter().filter(|r| !removed.contains(r.id.as_str())).cloned().collect();
    let dropped: usize = clusters.iter().map(|c| c.members.len() - 1).sum();
    if records.len() + dropped != manifest.len() {
        return Err(Error::Invariant(format!(
            "dedup of {}: {} unique + {dropped} removed != {}",
            manifest.name,
            records.len(),
            manifest.len()
        )));
    }
    Ok(Dedup { unique: manifest.renamed(format!("unique {}", manifest.name), records), clusters })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Leak {
    pub train_id: String,
    pub val_id: String,
}

#[derive(Debug)]
pub struct LeakRemoval {
    pub train: SplitManifest,
    pub leaked: Vec<Leak>,
}

/// Drops every training image that collides with a validation image. A
/// collision is the training identity hash appearing in a validation hash
/// set or the other way round; the two only differ when unrelated images
/// happen to share a hash. Validation is never modified.
pub fn remove_leakage(train: &SplitManifest, val: &SplitManifest) -> Result<LeakRemoval> {
    let mut by_augmented: HashMap<PerceptualHash, &str> = HashMap::new();
    let mut by_identity: HashMap<PerceptualHash, &str> = HashMap::new();
    // Records are sorted, so the first id stored per hash is the smallest.
    for set in val.hash_sets()? {
        by_identity.entry(set.identity()).or_insert(&set.id);
        for (_, h) in &set.hashes {
            by_augmented.entry(*h).or_insert(&set.id);
        }
    }
    let mut kept = Vec::new();
    let mut leaked = Vec::new();
    for (rec, set) in train.records.iter().zip(train.hash_sets()?) {
        let hit = by_augmented
            .get(&set.identity())
            .copied()
            .or_else(|| set.hashes.iter().filter_map(|(_, h)| by_identity.get(h).copied()).min());
        match hit {
            Some(val_id) => leaked.push(Leak { train_id: rec.id.clone(), val_id: val_id.into() }),
            None => kept.push(rec.clone()),
        }
    }
    Ok(LeakRemoval { train: train.renamed(train.name.clone(), kept), leaked })
}

#[derive(Debug, Clone)]
pub struct ResplitResult {
    pub train: SplitManifest,
    pub val: SplitManifest,
    pub ratio: f64,
    pub seed: u64,
}

/// `"{split}/{id}"`, the id of a record once splits are merged.
pub fn qualified_id(split: &str, id: &str) -> String {
    format!("{split}/{id}")
}

/// In-place Fisher-Yates shuffle driven by ChaCha8 seeded with
/// `seed_from_u64(seed)`. Step `i` (from the end) swaps with index
/// `(next_u64() * (i + 1)) >> 64`.
pub fn seeded_shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = ((u128::from(rng.next_u64()) * (i as u128 + 1)) >> 64) as usize;
        items.swap(i, j);
    }
}

/// Number of images assigned to the first split: `ceil(ratio * n)`, with a
/// tolerance so that e.g. `0.9 * 100` is 90 and not 91.
pub fn split_point(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

fn qualify<'a>(m: &'a SplitManifest, split: &'a str) -> impl Iterator<Item = ImageRecord> + 'a {
    m.records.iter().map(move |r| {
        let id = qualified_id(split, &r.id);
        let hashes = r.hashes.clone().map(|mut s| {
            s.id = id.clone();
            s
        });
        ImageRecord { id, path: r.path.clone(), byte_size: r.byte_size, hashes }
    })
}

/// Merges both splits (ids become `split/id`), shuffles with
/// [`seeded_shuffle`], and sends the first [`split_point`] images to train.
/// Each output split is sorted by id.
pub fn merge_resplit(
    train: &SplitManifest,
    val: &SplitManifest,
    ratio: f64,
    seed: u64,
) -> Result<ResplitResult> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!("split ratio {ratio} is not in (0, 1)")));
    }
    let mut merged: Vec<ImageRecord> = qualify(train, "train").chain(qualify(val, "val")).collect();
    merged.sort_by(|a, b| a.id.cmp(&b.id));
    seeded_shuffle(&mut merged, seed);
    let cut = split_point(merged.len(), ratio);
    let val_records = merged.split_off(cut);
    let result = ResplitResult {
        train: SplitManifest::new("train", merged)?,
        val: SplitManifest::new("val", val_records)?,
        ratio,
        seed,
    };
    Ok(result)
}

/// Fails with [`Error::Invariant`] if any image of `a` collides with any image
/// of `b` (identity hash of one inside the augmented set of the other).
pub fn verify_disjoint(a: &SplitManifest, b: &SplitManifest) -> Result<()> {
    let check = |x: &SplitManifest, y: &SplitManifest| -> Result<()> {
        let augmented: HashMap<PerceptualHash, &str> = y
            .hash_sets()?
            .into_iter()
            .flat_map(|s| s.hashes.iter().map(move |(_, h)| (*h, s.id.as_str())))
            .collect();
        for set in x.hash_sets()? {
            if let Some(other) = augmented.get(&set.identity()) {
                return Err(Error::Invariant(format!(
                    "{}/{} collides with {}/{other}",
                    x.name, set.id, y.name
                )));
            }
        }
        Ok(())
    };
    check(a, b)?;
    check(b, a)
}

/// What happened to an input image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Disposition {
    Retained,
    DuplicateOf(String),
    Leaked,
}

impl std::fmt::Display for Disposition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Disposition::Retained => f.write_str("retained"),
            Disposition::DuplicateOf(id) => write!(f, "duplicate-of:{id}"),
            Disposition::Leaked => f.write_str("leaked"),
        }
    }
}

/// Exactly one disposition per input image.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditLog {
    entries: BTreeMap<String, Disposition>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, id: String, disposition: Disposition) -> Result<()> {
        if let Some(previous) = self.entries.insert(id.clone(), disposition) {
            return Err(Error::Invariant(format!("{id} already audited as {previous}")));
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Disposition> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Disposition)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn count(&self, pred: impl Fn(&Disposition) -> bool) -> usize {
        self.entries.values().filter(|d| pred(d)).count()
    }

    /// Checks that the log covers exactly `ids`.
    pub fn check_covers(&self, ids: &BTreeSet<String>) -> Result<()> {
        let logged: BTreeSet<&String> = self.entries.keys().collect();
        let expected: BTreeSet<&String> = ids.iter().collect();
        if logged != expected {
            let missing = expected.difference(&logged).next();
            let extra = logged.difference(&expected).next();
            return Err(Error::Invariant(format!(
                "audit log does not match inputs (first missing {missing:?}, first extra {extra:?})"
            )));
        }
        Ok(())
    }
}

/// Audit entries for one split's dedup, with ids qualified by split name.
pub fn audit_dedup(
    log: &mut AuditLog,
    split: &str,
    manifest: &SplitManifest,
    dedup: &Dedup,
) -> Result<()> {
    let mut dup_of: HashMap<&str, &str> = HashMap::new();
    for c in &dedup.clusters {
        for m in c.removed() {
            dup_of.insert(m, &c.retained);
        }
    }
    for rec in &manifest.records {
        let d = match dup_of.get(rec.id.as_str()) {
            Some(kept) => Disposition::DuplicateOf(qualified_id(split, kept)),
            None => Disposition::Retained,
        };
        log.record(qualified_id(split, &rec.id), d)?;
    }
    Ok(())
}

/// Marks leaked training images, which must already be audited as retained.
pub fn audit_leaks(log: &mut AuditLog, split: &str, leaked: &[Leak]) -> Result<()> {
    for leak in leaked {
        let id = qualified_id(split, &leak.train_id);
        match log.entries.get_mut(&id) {
            Some(d @ Disposition::Retained) => *d = Disposition::Leaked,
            other => {
                return Err(Error::Invariant(format!("leaked image {id} is audited as {other:?}")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use dedup_scan_core::AugmentMode;

    fn rec(id: &str, hashes: [u64; 6]) -> ImageRecord {
        let hashes: Vec<_> = hashes.into_iter().map(PerceptualHash::from_bits).collect();
        ImageRecord {
            id: id.into(),
            path: PathBuf::from(id),
            byte_size: 1,
            hashes: Some(AugmentedHashSet::from_hashes(id, AugmentMode::Paper6, &hashes).unwrap()),
        }
    }

    fn distinct(id: &str, base: u64) -> ImageRecord {
        rec(id, [base, base + 1, base + 2, base + 3, base + 4, base + 5])
    }

    fn manifest(name: &str, records: Vec<ImageRecord>) -> SplitManifest {
        SplitManifest::new(name, records).unwrap()
    }

    #[test]
    fn percent_formula_matches_published_rows() {
        assert_eq!(leakage_percent(95_241, 280_741), 33.92);
        assert_eq!(leakage_percent(56_368, 60_317), 93.45);
        assert_eq!(leakage_percent(40, 100), 40.0);
        assert_eq!(leakage_percent(0, 0), 0.0);
    }

    #[test]
    fn leakage_of_a_split_against_itself_is_total() {
        let m = manifest("train", (0..5).map(|i| distinct(&format!("{i}"), i * 100)).collect());
        let r = detect_leakage(&m, &m, MatchMode::Exact).unwrap();
        assert_eq!((r.matched, r.haystack_total, r.percent), (5, 5, 100.0));
    }

    #[test]
    fn unhashed_manifest_is_invalid_state() {
        let mut r = distinct("a", 0);
        r.hashes = None;
        let m = manifest("x", vec![r]);
        assert!(matches!(detect_leakage(&m, &m, MatchMode::Exact), Err(Error::InvalidState(_))));
    }

    #[test]
    fn augmented_modes() {
        // h's identity is n's rot90; g shares only an augmented hash with n.
        let needles = manifest("val", vec![rec("n", [1, 2, 3, 4, 5, 6])]);
        let haystack = manifest(
            "train",
            vec![
                rec("g", [50, 51, 4, 52, 53, 54]),
                rec("h", [2, 60, 61, 1, 62, 63]),
                distinct("z", 900),
            ],
        );
        let exact = detect_leakage(&needles, &haystack, MatchMode::Exact).unwrap();
        let aug = detect_leakage(&needles, &haystack, MatchMode::Augmented).unwrap();
        let both = detect_leakage(&needles, &haystack, MatchMode::AugmentedBoth).unwrap();
        assert_eq!((exact.matched, aug.matched, both.matched), (0, 1, 2));
        assert_eq!(aug.needles, "augmented val");
        assert_eq!(both.haystack, "augmented train");
    }

    #[test]
    fn dedup_keeps_smallest_id_and_is_idempotent() {
        let m = manifest(
            "train",
            vec![
                rec("c", [7, 1, 1, 1, 1, 1]),
                rec("a", [7, 2, 2, 2, 2, 2]),
                rec("b", [8, 7, 3, 3, 3, 3]),
                distinct("d", 100),
            ],
        );
        let d = dedup_split(&m, EdgePolicy::default()).unwrap();
        assert_eq!(d.unique.ids(), vec!["a", "d"]);
        assert_eq!(d.clusters.len(), 1);
        assert_eq!(d.clusters[0].members, vec!["a", "b", "c"]);
        let again = dedup_split(&d.unique, EdgePolicy::default()).unwrap();
        assert!(again.clusters.is_empty());
        assert_eq!(again.unique.ids(), d.unique.ids());
    }

    #[test]
    fn leak_removal_only_touches_train() {
        let val = manifest("val", vec![rec("v", [1, 2, 3, 4, 5, 6]), distinct("w", 500)]);
        let train = manifest("train", vec![rec("t", [3, 40, 1, 41, 42, 43]), distinct("u", 900)]);
        let out = remove_leakage(&train, &val).unwrap();
        assert_eq!(out.train.ids(), vec!["u"]);
        assert_eq!(out.leaked, vec![Leak { train_id: "t".into(), val_id: "v".into() }]);
        let disjoint = remove_leakage(&out.train, &val).unwrap();
        assert!(disjoint.leaked.is_empty());
        verify_disjoint(&out.train, &val).unwrap();
        assert!(verify_disjoint(&train, &val).is_err());
    }

    #[test]
    fn resplit_sizes_and_determinism() {
        let train =
            manifest("train", (0..70).map(|i| distinct(&format!("{i:03}"), i * 10)).collect());
        let val = manifest(
            "val",
            (0..30).map(|i| distinct(&format!("{i:03}"), 10_000 + i * 10)).collect(),
        );
        let a = merge_resplit(&train, &val, 0.9, 1).unwrap();
        let b = merge_resplit(&train, &val, 0.9, 1).unwrap();
        let c = merge_resplit(&train, &val, 0.9, 2).unwrap();
        assert_eq!((a.train.len(), a.val.len()), (90, 10));
        assert_eq!(a.train.ids(), b.train.ids());
        assert_ne!(a.train.ids(), c.train.ids());
        assert!(a.train.records.iter().all(|r| r.hashes.as_ref().unwrap().id == r.id));
        for bad in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(merge_resplit(&train, &val, bad, 1).is_err());
        }
    }

    #[test]
    fn split_point_is_ceiling() {
        assert_eq!(split_point(100, 0.9), 90);
        assert_eq!(split_point(101, 0.9), 91);
        assert_eq!(split_point(3, 0.5), 2);
        assert_eq!(split_point(0, 0.9), 0);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut v: Vec<u32> = (0..1000).collect();
        seeded_shuffle(&mut v, 42);
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(sorted, (0..1000).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }

    #[test]
    fn audit_rejects_double_entries() {
        let mut log = AuditLog::new();
        log.record("a".into(), Disposition::Retained).unwrap();
        assert!(matches!(log.record("a".into(), Disposition::Leaked), Err(Error::Invariant(_))));
        assert_eq!(Disposition::DuplicateOf("train/x".into()).to_string(), "duplicate-of:train/x");
        let ids: BTreeSet<String> = ["a".to_string(), "b".to_string()].into();
        assert!(log.check_covers(&ids).is_err());
    }
}
