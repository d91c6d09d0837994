//! Report files. Everything here is a pure function of the pipeline results,
//! so reruns on the same inputs produce identical bytes.

use std::fs;
use std::path::Path;

use dedup_scan_core::DuplicateCluster;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{AuditLog, Leak, LeakageReport, SplitManifest};

pub const LEAKAGE_CSV_HEADER: [&str; 5] = [
    "Needles Set",
    "Haystack Set",
    "Total number of images in haystack",
    "Number of needles in haystack",
    "Data Leakage %",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

fn pretty(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invariant(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Invariant(e.to_string()))
}

pub fn leakage_json(reports: &[LeakageReport]) -> String {
    pretty(&reports)
}

pub fn leakage_csv(reports: &[LeakageReport]) -> Result<String> {
    csv_string(
        &LEAKAGE_CSV_HEADER,
        reports.iter().map(|r| {
            vec![
                r.needles.clone(),
                r.haystack.clone(),
                r.haystack_total.to_string(),
                r.matched.to_string(),
                format!("{:.2}", r.percent),
            ]
        }),
    )
}

#[derive(Serialize)]
struct ClusterRow<'a> {
    split: &'a str,
    id: usize,
    retained: &'a str,
    members: &'a [String],
}

/// `splits` pairs each split name with its clusters.
pub fn clusters_json(splits: &[(&str, &[DuplicateCluster])]) -> String {
    let rows: Vec<ClusterRow> = splits
        .iter()
        .flat_map(|(split, clusters)| {
            clusters.iter().map(move |c| ClusterRow {
                split,
                id: c.id,
                retained: &c.retained,
                members: &c.members,
            })
        })
        .collect();
    pretty(&rows)
}

pub fn audit_csv(log: &AuditLog) -> Result<String> {
    csv_string(
        &["image_id", "disposition"],
        log.iter().map(|(id, d)| vec![id.to_string(), d.to_string()]),
    )
}

/// Training images dropped for leakage and the validation image each matched.
pub fn leaks_csv(leaked: &[Leak]) -> Result<String> {
    csv_string(
        &["train_id", "val_id"],
        leaked.iter().map(|l| vec![l.train_id.clone(), l.val_id.clone()]),
    )
}

/// One row per image: id, file size, identity hash.
pub fn manifest_csv(manifest: &SplitManifest) -> Result<String> {
    csv_string(
        &["image_id", "byte_size", "phash"],
        manifest.records.iter().map(|r| {
            vec![
                r.id.clone(),
                r.byte_size.to_string(),
                r.identity().map(|h| h.to_string()).unwrap_or_default(),
            ]
        }),
    )
}

pub fn summary_json(summary: &impl Serialize) -> String {
    pretty(summary)
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `leakage.json` and/or `leakage.csv`.
pub fn write_leakage(dir: &Path, reports: &[LeakageReport], formats: &[Format]) -> Result<()> {
    for f in formats {
        match f {
            Format::Json => write(dir, "leakage.json", &leakage_json(reports))?,
            Format::Csv => write(dir, "leakage.csv", &leakage_csv(reports)?)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{Disposition, MatchMode};

    fn report(matched: usize, total: usize) -> LeakageReport {
        LeakageReport {
            needles: "augmented val".into(),
            haystack: "train".into(),
            match_mode: MatchMode::Augmented,
            haystack_total: total,
            matched,
            percent: crate::pipeline::leakage_percent(matched, total),
        }
    }

    #[test]
    fn leakage_csv_layout() {
        let csv = leakage_csv(&[report(40, 100), report(1, 3)]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "Needles Set,Haystack Set,Total number of images in haystack,Number of needles in haystack,Data Leakage %"
        );
        assert_eq!(lines[1], "augmented val,train,100,40,40.00");
        assert_eq!(lines[2], "augmented val,train,3,1,33.33");
    }

    #[test]
    fn leakage_json_fields() {
        let v: serde_json::Value = serde_json::from_str(&leakage_json(&[report(40, 100)])).unwrap();
        assert_eq!(v[0]["match"], "augmented");
        assert_eq!(v[0]["percent"], 40.0);
        assert_eq!(v[0]["haystack_total"], 100);
    }

    #[test]
    fn audit_rows_are_sorted() {
        let mut log = AuditLog::new();
        log.record("val/b".into(), Disposition::Retained).unwrap();
        log.record("train/z".into(), Disposition::DuplicateOf("train/a".into())).unwrap();
        log.record("train/a".into(), Disposition::Leaked).unwrap();
        assert_eq!(
            audit_csv(&log).unwrap(),
            "image_id,disposition\ntrain/a,leaked\ntrain/z,duplicate-of:train/a\nval/b,retained\n"
        );
    }
}
