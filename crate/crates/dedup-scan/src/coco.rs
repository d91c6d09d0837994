//! MS-COCO polygon annotations: read, validate, filter, merge, write.
//!
//! Images are joined to the pipeline by `file_name`. Fields this module does
//! not model (`iscrowd`, `info`, `licenses`, ...) are carried through
//! untouched and written back in sorted key order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

type Extra = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// Flat `[x0, y0, x1, y1, ...]` polygons.
    pub segmentation: Vec<Vec<f64>>,
    /// `[x, y, w, h]`.
    pub bbox: [f64; 4],
    pub area: f64,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Deserialize)]
struct RawDataset {
    #[serde(default)]
    images: Vec<Value>,
    #[serde(default)]
    annotations: Vec<Value>,
    #[serde(default)]
    categories: Vec<Value>,
    #[serde(flatten)]
    extra: Extra,
}

fn describe(v: &Value) -> String {
    v.get("id").map_or_else(|| "without id".to_string(), |id| format!("id {id}"))
}

fn polygon_problem(ann: &CocoAnnotation) -> Option<String> {
    if let Some(p) = ann.segmentation.iter().find(|p| p.len() < 6 || p.len() % 2 != 0) {
        return Some(format!("polygon with {} coordinates", p.len()));
    }
    if ann.bbox[2] < 0.0 || ann.bbox[3] < 0.0 {
        return Some(format!("negative bbox extent {:?}", ann.bbox));
    }
    None
}

impl CocoDataset {
    /// Parses and validates COCO JSON. Records that fail to parse or break an
    /// invariant (dangling image id, short or odd polygon, negative bbox,
    /// duplicate id) are dropped with a warning.
    pub fn from_json(text: &str) -> std::result::Result<(Self, Vec<String>), serde_json::Error> {
        let raw: RawDataset = serde_json::from_str(text)?;
        let mut warnings = Vec::new();
        let mut ds = CocoDataset { extra: raw.extra, ..Default::default() };

        let mut image_ids = BTreeSet::new();
        for v in raw.images {
            match serde_json::from_value::<CocoImage>(v.clone()) {
                Ok(img) if image_ids.insert(img.id) => ds.images.push(img),
                Ok(img) => warnings.push(format!("dropping image {}: duplicate id", img.id)),
                Err(e) => warnings.push(format!("dropping image {}: {e}", describe(&v))),
            }
        }
        let mut category_ids = BTreeSet::new();
        for v in raw.categories {
            match serde_json::from_value::<CocoCategory>(v.clone()) {
                Ok(c) if category_ids.insert(c.id) => ds.categories.push(c),
                Ok(c) => warnings.push(format!("dropping category {}: duplicate id", c.id)),
                Err(e) => warnings.push(format!("dropping category {}: {e}", describe(&v))),
            }
        }
        let mut annotation_ids = BTreeSet::new();
        for v in raw.annotations {
            let ann = match serde_json::from_value::<CocoAnnotation>(v.clone()) {
                Ok(a) => a,
                Err(e) => {
                    warnings.push(format!("dropping annotation {}: {e}", describe(&v)));
                    continue;
                }
            };
            if !image_ids.contains(&ann.image_id) {
                warnings.push(format!(
                    "dropping annotation {}: image {} does not exist",
                    ann.id, ann.image_id
                ));
            } else if let Some(problem) = polygon_problem(&ann) {
                warnings.push(format!("dropping annotation {}: {problem}", ann.id));
            } else if !annotation_ids.insert(ann.id) {
                warnings.push(format!("dropping annotation {}: duplicate id", ann.id));
            } else {
                if !category_ids.contains(&ann.category_id) {
                    warnings.push(format!(
                        "annotation {} uses unknown category {}",
                        ann.id, ann.category_id
                    ));
                }
                ds.annotations.push(ann);
            }
        }
        Ok((ds, warnings))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("COCO values always serialize");
        s.push('\n');
        s
    }

    /// Number of annotations per image id.
    pub fn annotation_counts(&self) -> BTreeMap<u64, usize> {
        let mut counts = BTreeMap::new();
        for a in &self.annotations {
            *counts.entry(a.image_id).or_default() += 1;
        }
        counts
    }

    /// Annotations whose image is missing. Empty for any dataset produced by
    /// this module.
    pub fn dangling_annotations(&self) -> Vec<u64> {
        let ids: BTreeSet<u64> = self.images.iter().map(|i| i.id).collect();
        self.annotations.iter().filter(|a| !ids.contains(&a.image_id)).map(|a| a.id).collect()
    }
}

pub fn read_coco(path: &Path) -> Result<(CocoDataset, Vec<String>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CocoDataset::from_json(&text).map_err(|source| Error::Json { path: path.into(), source })
}

pub fn write_coco(ds: &CocoDataset, path: &Path) -> Result<()> {
    fs::write(path, ds.to_json()).map_err(|e| Error::io(path, e))
}

/// Keeps the images whose `file_name` is in `kept` and their annotations.
/// With `remap`, image and annotation ids are renumbered densely from 1 in
/// their original order. Kept names missing from the dataset produce a
/// warning each.
pub fn filter_coco(
    ds: &CocoDataset,
    kept: &BTreeSet<String>,
    remap: bool,
) -> (CocoDataset, Vec<String>) {
    let present: BTreeSet<&str> = ds.images.iter().map(|i| i.file_name.as_str()).collect();
    let warnings = kept
        .iter()
        .filter(|k| !present.contains(k.as_str()))
        .map(|k| format!("{k} is not in the annotation file"))
        .collect();

    let mut images: Vec<CocoImage> =
        ds.images.iter().filter(|i| kept.contains(&i.file_name)).cloned().collect();
    let surviving: BTreeSet<u64> = images.iter().map(|i| i.id).collect();
    let mut annotations: Vec<CocoAnnotation> =
        ds.annotations.iter().filter(|a| surviving.contains(&a.image_id)).cloned().collect();

    if remap {
        let mut new_id = BTreeMap::new();
        for (i, img) in images.iter_mut().enumerate() {
            new_id.insert(img.id, i as u64 + 1);
            img.id = i as u64 + 1;
        }
        for (i, ann) in annotations.iter_mut().enumerate() {
            ann.id = i as u64 + 1;
            ann.image_id = new_id[&ann.image_id];
        }
    }
    let out = CocoDataset {
        images,
        annotations,
        categories: ds.categories.clone(),
        extra: ds.extra.clone(),
    };
    (out, warnings)
}

/// Concatenates datasets, prefixing every `file_name` with `"{prefix}/"` and
/// renumbering image and annotation ids densely from 1. Categories are
/// merged by id and must agree on names. Top-level extras come from the
/// first part.
pub fn merge_coco(parts: &[(&str, &CocoDataset)]) -> Result<CocoDataset> {
    let mut out = CocoDataset::default();
    let mut categories: BTreeMap<u64, CocoCategory> = BTreeMap::new();
    for (prefix, ds) in parts {
        if out.extra.is_empty() {
            out.extra = ds.extra.clone();
        }
        for c in &ds.categories {
            match categories.get(&c.id) {
                Some(existing) if existing.name != c.name => {
                    return Err(Error::InvalidInput(format!(
                        "category {} is {:?} in one file and {:?} in another",
                        c.id, existing.name, c.name
                    )));
                }
                Some(_) => {}
                None => {
                    categories.insert(c.id, c.clone());
                }
            }
        }
        let mut new_id = BTreeMap::new();
        for img in &ds.images {
            let id = out.images.len() as u64 + 1;
            new_id.insert(img.id, id);
            out.images.push(CocoImage {
                id,
                file_name: format!("{prefix}/{}", img.file_name),
                ..img.clone()
            });
        }
        for ann in &ds.annotations {
            let image_id = *new_id.get(&ann.image_id).ok_or_else(|| {
                Error::InvalidInput(format!("annotation {} has no image", ann.id))
            })?;
            out.annotations.push(CocoAnnotation {
                id: out.annotations.len() as u64 + 1,
                image_id,
                ..ann.clone()
            });
        }
    }
    out.categories = categories.into_values().collect();
    Ok(out)
}
