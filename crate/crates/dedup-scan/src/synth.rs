//! Synthetic corpora with planted duplicates and leaks.
//!
//! Base images are smooth multi-octave value noise, one independent field
//! per channel. Every base gets a distinct file in train or val; exact
//! duplicates are byte copies of a base PNG, augmented duplicates are pixel
//! transforms of a base, and leaks are copies (plain or transformed) of val
//! bases written into train. The returned [`GroundTruth`] is what a correct
//! pipeline must report.
//!
//! File names sort bases (`b...`) before their copies (`e...`, `t...`,
//! `l...`), so the base is always the image a cluster retains.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use dedup_scan_core::{
    apply_transform, augmented_hash_set, AugmentMode, PerceptualHash, RgbImage, Transform,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coco::{CocoAnnotation, CocoCategory, CocoDataset, CocoImage};
use crate::error::{Error, Result};

/// How many times a base colliding with an earlier one is regenerated.
const MAX_RETRIES: u64 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    /// Total number of distinct base images.
    pub bases: usize,
    /// How many of the bases go to val; the rest go to train.
    pub val_bases: usize,
    /// Side length of the (square) images.
    pub size: usize,
    pub exact_duplicates: usize,
    /// Drawn uniformly from the five non-identity `paper6` transforms.
    pub augmented_duplicates: usize,
    /// Each leak copies a different val base into train.
    pub leaks: usize,
    pub train_dir: PathBuf,
    pub val_dir: PathBuf,
    /// Also write `train.json` / `val.json` COCO files next to the image
    /// directories' parent.
    pub coco_dir: Option<PathBuf>,
}

impl CorpusSpec {
    pub fn new(out: &Path, seed: u64) -> Self {
        Self {
            seed,
            bases: 100,
            val_bases: 20,
            size: 300,
            exact_duplicates: 0,
            augmented_duplicates: 0,
            leaks: 0,
            train_dir: out.join("train"),
            val_dir: out.join("val"),
            coco_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlantedMember {
    pub id: String,
    /// How the member was made from the base. `identity` for the base itself
    /// and for exact copies.
    pub transform: String,
    pub exact_copy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedCluster {
    pub split: String,
    pub base: String,
    /// Sorted by id; includes the base.
    pub members: Vec<PlantedMember>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedLeak {
    pub val_id: String,
    pub train_id: String,
    pub transform: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub train_images: usize,
    pub val_images: usize,
    pub train_unique: usize,
    pub val_unique: usize,
    /// Train images left after leaks are removed.
    pub train_clean: usize,
    pub clusters: Vec<PlantedCluster>,
    pub leaks: Vec<PlantedLeak>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("ground truth serializes");
        s.push('\n');
        s
    }
}

fn value_noise(rng: &mut ChaCha8Rng, size: usize, cells: usize) -> Vec<f64> {
    let g = cells + 1;
    let grid: Vec<f64> = (0..g * g).map(|_| rng.random::<f64>()).collect();
    let scale = cells as f64 / size as f64;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let fy = (y as f64 + 0.5) * scale;
        let (y0, ty) = ((fy as usize).min(cells - 1), fy.fract());
        for x in 0..size {
            let fx = (x as f64 + 0.5) * scale;
            let (x0, tx) = ((fx as usize).min(cells - 1), fx.fract());
            let at = |yy: usize, xx: usize| grid[yy * g + xx];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
            let bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// A textured base image, fully determined by `(seed, stream)`.
pub fn texture(seed: u64, stream: u64, size: usize) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let octaves = [(3usize, 0.55), (7, 0.3), (17, 0.15)];
    let channels: Vec<Vec<f64>> = (0..3)
        .map(|_| {
            let mut acc = vec![0.0; size * size];
            for &(cells, weight) in &octaves {
                for (a, v) in acc.iter_mut().zip(value_noise(&mut rng, size, cells)) {
                    *a += weight * v;
                }
            }
            acc
        })
        .collect();
    let pixels = (0..size * size)
        .map(|i| {
            let q = |c: usize| (channels[c][i] * 255.0).round().clamp(0.0, 255.0) as u8;
            [q(0), q(1), q(2)]
        })
        .collect();
    RgbImage::new(size, size, pixels).expect("size > 0")
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_raw())
        .ok_or_else(|| Error::Invariant("RGB buffer size mismatch".into()))?;
    let mut out = Vec::new();
    buf.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)?;
    Ok(out)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Base {
    image: RgbImage,
    hashes: Vec<PerceptualHash>,
}

fn make_base(seed: u64, index: usize, attempt: u64, size: usize) -> Result<Base> {
    let image = texture(seed, (attempt << 32) | index as u64, size);
    let set = augmented_hash_set("", &image, AugmentMode::Full8)?;
    Ok(Base { hashes: set.hashes.iter().map(|(_, h)| *h).collect(), image })
}

/// Generates `count` bases whose full dihedral hash orbits are pairwise
/// disjoint, regenerating any base that collides with an earlier one.
#[allow(clippy::needless_range_loop)]
fn generate_bases(seed: u64, count: usize, size: usize) -> Result<Vec<Base>> {
    let mut bases: Vec<Base> =
        (0..count).into_par_iter().map(|i| make_base(seed, i, 0, size)).collect::<Result<_>>()?;
    let mut owner: HashMap<PerceptualHash, usize> = HashMap::new();
    for i in 0..count {
        let mut attempt = 0;
        loop {
            let clash = bases[i].hashes.iter().any(|h| owner.get(h).is_some_and(|&o| o != i));
            if !clash {
                break;
            }
            attempt += 1;
            if attempt > MAX_RETRIES {
                return Err(Error::Invariant(format!(
                    "base {i} still collides after {MAX_RETRIES} regenerations"
                )));
            }
            bases[i] = make_base(seed, i, attempt, size)?;
        }
        for h in &bases[i].hashes {
            owner.insert(*h, i);
        }
    }
    Ok(bases)
}

const NON_IDENTITY_PAPER6: [Transform; 5] =
    [Transform::Rot90, Transform::Rot180, Transform::Rot270, Transform::FlipH, Transform::FlipV];

fn square_annotation(rng: &mut ChaCha8Rng, id: u64, image_id: u64, size: usize) -> CocoAnnotation {
    let s = size as f64;
    let x = rng.random_range(0.0..s * 0.7).round();
    let y = rng.random_range(0.0..s * 0.7).round();
    let w = rng.random_range(4.0..s * 0.3).round();
    let h = rng.random_range(4.0..s * 0.3).round();
    CocoAnnotation {
        id,
        image_id,
        category_id: 100,
        segmentation: vec![vec![x, y, x + w, y, x + w, y + h, x, y + h]],
        bbox: [x, y, w, h],
        area: w * h,
        extra: [("iscrowd".to_string(), serde_json::json!(0))].into(),
    }
}

/// Synthetic COCO file covering `names`, with 0 to 3 rectangles per image.
pub fn synthetic_coco(seed: u64, names: &[String], size: usize) -> CocoDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = CocoDataset {
        categories: vec![CocoCategory { id: 100, name: "building".into(), extra: BTreeMap::new() }],
        ..Default::default()
    };
    for (i, name) in names.iter().enumerate() {
        let image_id = i as u64 + 1;
        ds.images.push(CocoImage {
            id: image_id,
            file_name: name.clone(),
            width: size as u32,
            height: size as u32,
            extra: BTreeMap::new(),
        });
        for _ in 0..rng.random_range(0..4) {
            let id = ds.annotations.len() as u64 + 1;
            ds.annotations.push(square_annotation(&mut rng, id, image_id, size));
        }
    }
    ds
}

/// Writes the corpus described by `spec` and returns its ground truth.
pub fn generate(spec: &CorpusSpec) -> Result<GroundTruth> {
    if spec.size == 0 {
        return Err(Error::InvalidInput("image size must be positive".into()));
    }
    if spec.val_bases > spec.bases {
        return Err(Error::InvalidInput(format!(
            "{} val bases requested out of {} bases",
            spec.val_bases, spec.bases
        )));
    }
    if spec.leaks > spec.val_bases {
        return Err(Error::InvalidInput(format!(
            "{} leaks need at least as many val bases (have {})",
            spec.leaks, spec.val_bases
        )));
    }
    if spec.bases == 0 && spec.exact_duplicates + spec.augmented_duplicates > 0 {
        return Err(Error::InvalidInput("duplicates need at least one base".into()));
    }
    for dir in [&spec.train_dir, &spec.val_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let bases = generate_bases(spec.seed, spec.bases, spec.size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_5eed_5eed_5eed);

    let mut order: Vec<usize> = (0..spec.bases).collect();
    crate::pipeline::seeded_shuffle(&mut order, rng.random());
    let mut in_val = vec![false; spec.bases];
    for &i in &order[..spec.val_bases] {
        in_val[i] = true;
    }
    let split_of = |i: usize| if in_val[i] { "val" } else { "train" };
    let dir_of = |i: usize| if in_val[i] { &spec.val_dir } else { &spec.train_dir };
    let base_name = |i: usize| format!("b{i:06}.png");

    let encoded: Vec<Vec<u8>> =
        bases.par_iter().map(|b| encode_png(&b.image)).collect::<Result<_>>()?;
    for (i, bytes) in encoded.iter().enumerate() {
        write(&dir_of(i).join(base_name(i)), bytes)?;
    }

    let mut members: BTreeMap<usize, Vec<PlantedMember>> = BTreeMap::new();
    for k in 0..spec.exact_duplicates {
        let i = rng.random_range(0..spec.bases);
        let name = format!("e{k:06}.png");
        write(&dir_of(i).join(&name), &encoded[i])?;
        members.entry(i).or_default().push(PlantedMember {
            id: name,
            transform: Transform::Identity.name().into(),
            exact_copy: true,
        });
    }

    let mut augmented = Vec::new();
    for k in 0..spec.augmented_duplicates {
        let i = rng.random_range(0..spec.bases);
        let t = NON_IDENTITY_PAPER6[rng.random_range(0..NON_IDENTITY_PAPER6.len())];
        augmented.push((format!("t{k:06}.png"), i, t, dir_of(i).clone()));
        members.entry(i).or_default().push(PlantedMember {
            id: format!("t{k:06}.png"),
            transform: t.name().into(),
            exact_copy: false,
        });
    }

    let mut val_pool: Vec<usize> = (0..spec.bases).filter(|&i| in_val[i]).collect();
    crate::pipeline::seeded_shuffle(&mut val_pool, rng.random());
    let mut leaks = Vec::new();
    let mut leak_jobs = Vec::new();
    for (k, &i) in val_pool.iter().take(spec.leaks).enumerate() {
        let choices = AugmentMode::Paper6.transforms();
        let t = choices[rng.random_range(0..choices.len())];
        let name = format!("l{k:06}.png");
        leak_jobs.push((name.clone(), i, t, spec.train_dir.clone()));
        leaks.push(PlantedLeak {
            val_id: base_name(i),
            train_id: name,
            transform: t.name().into(),
        });
    }

    augmented.par_iter().chain(leak_jobs.par_iter()).try_for_each(
        |(name, i, t, dir)| -> Result<()> {
            let bytes = if *t == Transform::Identity {
                encoded[*i].clone()
            } else {
                encode_png(&apply_transform(&bases[*i].image, *t)?)?
            };
            write(&dir.join(name), &bytes)
        },
    )?;

    let clusters: Vec<PlantedCluster> = members
        .into_iter()
        .map(|(i, mut extra)| {
            extra.push(PlantedMember {
                id: base_name(i),
                transform: Transform::Identity.name().into(),
                exact_copy: false,
            });
            extra.sort();
            PlantedCluster { split: split_of(i).into(), base: base_name(i), members: extra }
        })
        .collect();
    let mut clusters = clusters;
    clusters.sort_by(|a, b| (&a.split, &a.base).cmp(&(&b.split, &b.base)));

    let val_base_count = spec.val_bases;
    let train_base_count = spec.bases - spec.val_bases;
    let count_in = |split: &str| -> usize {
        clusters.iter().filter(|c| c.split == split).map(|c| c.members.len() - 1).sum()
    };
    let truth = GroundTruth {
        seed: spec.seed,
        train_images: train_base_count + count_in("train") + spec.leaks,
        val_images: val_base_count + count_in("val"),
        train_unique: train_base_count + spec.leaks,
        val_unique: val_base_count,
        train_clean: train_base_count,
        clusters,
        leaks,
    };

    if let Some(dir) = &spec.coco_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (split, split_dir) in [("train", &spec.train_dir), ("val", &spec.val_dir)] {
            let mut names: Vec<String> = fs::read_dir(split_dir)
                .map_err(|e| Error::io(split_dir, e))?
                .filter_map(|e| e.ok())
                .filter_map(|e| e.file_name().to_str().map(str::to_owned))
                .filter(|n| n.ends_with(".png"))
                .collect();
            names.sort();
            let ds = synthetic_coco(spec.seed ^ split.len() as u64, &names, spec.size);
            crate::coco::write_coco(&ds, &dir.join(format!("{split}.json")))?;
        }
    }
    Ok(truth)
}
