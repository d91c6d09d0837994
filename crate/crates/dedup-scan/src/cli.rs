//! Command-line front end.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dedup_scan_core::{AugmentMode, EdgePolicy};
use serde::Serialize;

use crate::coco::{filter_coco, merge_coco, read_coco, write_coco};
use crate::error::{Error, Result};
use crate::pipeline::{
    audit_dedup, audit_leaks, dedup_split, detect_leakage, hash_split, ingest, merge_resplit,
    remove_leakage, verify_disjoint, AuditLog, HashOptions, LeakageReport, MatchMode,
    SplitManifest,
};
use crate::report::{self, Format};
use crate::synth::{generate, CorpusSpec};

#[derive(Debug, Parser)]
#[command(
    name = "dedup-scan",
    version,
    about = "Find duplicates and train/val leakage in image datasets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hash both splits and refresh the cache.
    Hash(Common),
    /// Measure val-to-train leakage.
    Leakage(LeakageArgs),
    /// Remove duplicates inside each split.
    Dedup(Common),
    /// Dedup, drop leaked training images, merge and resplit.
    Resplit(ResplitArgs),
    /// Generate a synthetic corpus with planted duplicates and leaks.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Paper6,
    Full8,
}

impl From<ModeArg> for AugmentMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Paper6 => AugmentMode::Paper6,
            ModeArg::Full8 => AugmentMode::Full8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatchArg {
    Exact,
    Augmented,
    AugmentedBoth,
}

impl From<MatchArg> for MatchMode {
    fn from(m: MatchArg) -> Self {
        match m {
            MatchArg::Exact => MatchMode::Exact,
            MatchArg::Augmented => MatchMode::Augmented,
            MatchArg::AugmentedBoth => MatchMode::AugmentedBoth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EdgeArg {
    /// One side of every collision must be an identity hash.
    Identity,
    /// Also link images whose augmented hashes coincide.
    All,
}

impl From<EdgeArg> for EdgePolicy {
    fn from(e: EdgeArg) -> Self {
        match e {
            EdgeArg::Identity => EdgePolicy::IdentityEndpoint,
            EdgeArg::All => EdgePolicy::Strict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub train_dir: PathBuf,
    #[arg(long)]
    pub val_dir: Option<PathBuf>,
    /// COCO annotations for the training images.
    #[arg(long)]
    pub train_ann: Option<PathBuf>,
    #[arg(long)]
    pub val_ann: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "paper6")]
    pub mode: ModeArg,
    /// Directory holding one `<split>.phcache` file per split.
    #[arg(long, env = "DEDUP_SCAN_CACHE")]
    pub cache: Option<PathBuf>,
    /// Also key cache entries on a SHA-256 of the file contents.
    #[arg(long)]
    pub strict_cache: bool,
    /// Derive augmented hashes from the DCT block instead of the pixels.
    #[arg(long)]
    pub fast_path: bool,
    /// Treat unreadable images and annotation problems as errors.
    #[arg(long)]
    pub strict: bool,
    /// Worker threads for hashing [default: available CPUs].
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "dedup-scan-out")]
    pub out: PathBuf,
    /// Report formats; repeat for several [default: json and csv].
    #[arg(long = "format", value_enum)]
    pub formats: Vec<FormatArg>,
    /// Which hash coincidences count as duplicate edges.
    #[arg(long, value_enum, default_value = "identity")]
    pub edge_policy: EdgeArg,
}

#[derive(Debug, Args)]
pub struct LeakageArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "match", value_enum, default_value = "augmented")]
    pub match_mode: MatchArg,
    /// Report the five standard comparisons instead of a single one.
    #[arg(long)]
    pub full_table: bool,
}

#[derive(Debug, Args)]
pub struct ResplitArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of the merged images sent to train.
    #[arg(long, default_value_t = 0.9)]
    pub ratio: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub bases: usize,
    /// Bases placed in val [default: a fifth of the bases].
    #[arg(long)]
    pub val_bases: Option<usize>,
    #[arg(long, default_value_t = 300)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub exact: usize,
    #[arg(long, default_value_t = 0)]
    pub augmented: usize,
    #[arg(long, default_value_t = 0)]
    pub leaks: usize,
    /// Also write synthetic COCO annotations.
    #[arg(long)]
    pub coco: bool,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let start = Instant::now();
    match execute(cli.command) {
        Ok(()) => {
            println!("elapsed: {:.2}s", start.elapsed().as_secs_f64());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Hash(c) => cmd_hash(&c),
        Command::Leakage(a) => cmd_leakage(&a),
        Command::Dedup(c) => cmd_dedup(&c),
        Command::Resplit(a) => cmd_resplit(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

struct Warnings {
    strict: bool,
}

impl Warnings {
    fn emit(&self, warnings: Vec<String>) -> Result<()> {
        if self.strict {
            if let Some(first) = warnings.into_iter().next() {
                return Err(Error::InvalidInput(first));
            }
            return Ok(());
        }
        for w in warnings {
            eprintln!("warning: {w}");
        }
        Ok(())
    }
}

impl Common {
    fn formats(&self) -> Vec<Format> {
        let mut out: Vec<Format> = self
            .formats
            .iter()
            .map(|f| match f {
                FormatArg::Json => Format::Json,
                FormatArg::Csv => Format::Csv,
            })
            .collect();
        if out.is_empty() {
            out = vec![Format::Json, Format::Csv];
        }
        out.dedup();
        out
    }

    fn options(&self, split: &str) -> HashOptions {
        let workers = self
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        HashOptions {
            mode: self.mode.into(),
            cache_file: self.cache.as_ref().map(|d| d.join(format!("{split}.phcache"))),
            strict_cache: self.strict_cache,
            workers,
            fast_path: self.fast_path,
        }
    }

    fn warnings(&self) -> Warnings {
        Warnings { strict: self.strict }
    }

    fn load(&self, split: &str, dir: &Path, ann: Option<&Path>) -> Result<SplitManifest> {
        let warn = self.warnings();
        let ingested = ingest(split, dir, ann)?;
        warn.emit(ingested.warnings)?;
        let hashed = hash_split(ingested.manifest, &self.options(split))?;
        warn.emit(hashed.warnings)?;
        println!(
            "hashed {split}: {} images ({} cache hits, {} computed)",
            hashed.manifest.len(),
            hashed.stats.cache_hits,
            hashed.stats.computed
        );
        Ok(hashed.manifest)
    }

    fn load_train(&self) -> Result<SplitManifest> {
        self.load("train", &self.train_dir, self.train_ann.as_deref())
    }

    fn load_val(&self) -> Result<Option<SplitManifest>> {
        match &self.val_dir {
            Some(dir) => self.load("val", dir, self.val_ann.as_deref()).map(Some),
            None => Ok(None),
        }
    }

    fn require_val(&self) -> Result<SplitManifest> {
        self.load_val()?
            .ok_or_else(|| Error::InvalidInput("--val-dir is required for this command".into()))
    }
}

fn cmd_hash(c: &Common) -> Result<()> {
    c.load_train()?;
    c.load_val()?;
    Ok(())
}

/// The five standard comparisons: raw splits under each match mode, then
/// the deduplicated splits, then the reverse direction.
pub fn full_table(
    train: &SplitManifest,
    val: &SplitManifest,
    policy: EdgePolicy,
) -> Result<Vec<LeakageReport>> {
    let unique_train = dedup_split(train, policy)?.unique;
    let unique_val = dedup_split(val, policy)?.unique;
    Ok(vec![
        detect_leakage(val, train, MatchMode::Exact)?,
        detect_leakage(val, train, MatchMode::Augmented)?,
        detect_leakage(val, train, MatchMode::AugmentedBoth)?,
        detect_leakage(&unique_val, &unique_train, MatchMode::Augmented)?,
        detect_leakage(train, val, MatchMode::Augmented)?,
    ])
}

fn print_leakage(reports: &[LeakageReport]) {
    for r in reports {
        println!(
            "{} in {}: {} of {} ({:.2}%)",
            r.needles, r.haystack, r.matched, r.haystack_total, r.percent
        );
    }
}

fn cmd_leakage(a: &LeakageArgs) -> Result<()> {
    let c = &a.common;
    let train = c.load_train()?;
    let val = c.require_val()?;
    let reports = if a.full_table {
        full_table(&train, &val, c.edge_policy.into())?
    } else {
        vec![detect_leakage(&val, &train, a.match_mode.into())?]
    };
    print_leakage(&reports);
    report::write_leakage(&c.out, &reports, &c.formats())
}

#[derive(Serialize)]
struct SplitCounts {
    split: String,
    images: usize,
    unique: usize,
    clusters: usize,
}

fn filtered_coco(c: &Common, ann: &Path, manifest: &SplitManifest, name: &str) -> Result<()> {
    let (ds, warnings) = read_coco(ann)?;
    c.warnings().emit(warnings)?;
    let kept: BTreeSet<String> = manifest.ids().into_iter().collect();
    let (out, warnings) = filter_coco(&ds, &kept, false);
    c.warnings().emit(warnings)?;
    write_coco(&out, &c.out.join(name))
}

fn cmd_dedup(c: &Common) -> Result<()> {
    let mut splits = vec![(c.load_train()?, c.train_ann.clone())];
    if let Some(val) = c.load_val()? {
        splits.push((val, c.val_ann.clone()));
    }
    let mut all_clusters = Vec::new();
    let mut counts = Vec::new();
    let mut audit = AuditLog::new();
    for (manifest, ann) in &splits {
        let d = dedup_split(manifest, c.edge_policy.into())?;
        audit_dedup(&mut audit, &manifest.name, manifest, &d)?;
        println!(
            "{}: {} images, {} unique, {} clusters",
            manifest.name,
            manifest.len(),
            d.unique.len(),
            d.clusters.len()
        );
        report::write(
            &c.out,
            &format!("{}.csv", manifest.name),
            &report::manifest_csv(&d.unique)?,
        )?;
        if let Some(ann) = ann {
            filtered_coco(c, ann, &d.unique, &format!("{}.json", manifest.name))?;
        }
        counts.push(SplitCounts {
            split: manifest.name.clone(),
            images: manifest.len(),
            unique: d.unique.len(),
            clusters: d.clusters.len(),
        });
        all_clusters.push((manifest.name.clone(), d.clusters));
    }
    let refs: Vec<(&str, &[_])> =
        all_clusters.iter().map(|(n, cl)| (n.as_str(), cl.as_slice())).collect();
    report::write(&c.out, "clusters.json", &report::clusters_json(&refs))?;
    report::write(&c.out, "audit.csv", &report::audit_csv(&audit)?)?;
    report::write(&c.out, "summary.json", &report::summary_json(&counts))
}

#[derive(Serialize)]
struct ResplitSummary {
    mode: &'static str,
    seed: u64,
    ratio: f64,
    train_images: usize,
    val_images: usize,
    train_unique: usize,
    val_unique: usize,
    train_clusters: usize,
    val_clusters: usize,
    leaked: usize,
    output_train: usize,
    output_val: usize,
}

fn cmd_resplit(a: &ResplitArgs) -> Result<()> {
    let c = &a.common;
    if c.train_ann.is_some() != c.val_ann.is_some() {
        return Err(Error::InvalidInput("give both --train-ann and --val-ann, or neither".into()));
    }
    if !(a.ratio > 0.0 && a.ratio < 1.0) {
        return Err(Error::InvalidInput(format!("--ratio {} is not in (0, 1)", a.ratio)));
    }
    let train = c.load_train()?;
    let val = c.require_val()?;
    let leakage = full_table(&train, &val, c.edge_policy.into())?;
    print_leakage(&leakage);

    let mut audit = AuditLog::new();
    let train_dedup = dedup_split(&train, c.edge_policy.into())?;
    let val_dedup = dedup_split(&val, c.edge_policy.into())?;
    audit_dedup(&mut audit, "train", &train, &train_dedup)?;
    audit_dedup(&mut audit, "val", &val, &val_dedup)?;
    let removal = remove_leakage(&train_dedup.unique, &val_dedup.unique)?;
    audit_leaks(&mut audit, "train", &removal.leaked)?;

    let inputs: BTreeSet<String> = train
        .ids()
        .iter()
        .map(|id| crate::pipeline::qualified_id("train", id))
        .chain(val.ids().iter().map(|id| crate::pipeline::qualified_id("val", id)))
        .collect();
    audit.check_covers(&inputs)?;

    let result = merge_resplit(&removal.train, &val_dedup.unique, a.ratio, a.seed)?;
    verify_disjoint(&result.train, &result.val)?;
    let kept = audit.count(|d| *d == crate::pipeline::Disposition::Retained);
    if kept != result.train.len() + result.val.len() {
        return Err(Error::Invariant(format!(
            "{kept} retained images but {} in the output splits",
            result.train.len() + result.val.len()
        )));
    }

    let summary = ResplitSummary {
        mode: AugmentMode::from(c.mode).name(),
        seed: a.seed,
        ratio: a.ratio,
        train_images: train.len(),
        val_images: val.len(),
        train_unique: train_dedup.unique.len(),
        val_unique: val_dedup.unique.len(),
        train_clusters: train_dedup.clusters.len(),
        val_clusters: val_dedup.clusters.len(),
        leaked: removal.leaked.len(),
        output_train: result.train.len(),
        output_val: result.val.len(),
    };
    println!(
        "train {} -> {} unique, val {} -> {} unique, {} leaked, resplit {} / {}",
        summary.train_images,
        summary.train_unique,
        summary.val_images,
        summary.val_unique,
        summary.leaked,
        summary.output_train,
        summary.output_val
    );

    report::write_leakage(&c.out, &leakage, &c.formats())?;
    let clusters =
        [("train", train_dedup.clusters.as_slice()), ("val", val_dedup.clusters.as_slice())];
    report::write(&c.out, "clusters.json", &report::clusters_json(&clusters))?;
    report::write(&c.out, "audit.csv", &report::audit_csv(&audit)?)?;
    report::write(&c.out, "leaks.csv", &report::leaks_csv(&removal.leaked)?)?;
    report::write(&c.out, "train.csv", &report::manifest_csv(&result.train)?)?;
    report::write(&c.out, "val.csv", &report::manifest_csv(&result.val)?)?;
    report::write(&c.out, "summary.json", &report::summary_json(&summary))?;

    if let (Some(train_ann), Some(val_ann)) = (&c.train_ann, &c.val_ann) {
        let (train_ds, w1) = read_coco(train_ann)?;
        let (val_ds, w2) = read_coco(val_ann)?;
        c.warnings().emit(w1.into_iter().chain(w2).collect())?;
        let merged = merge_coco(&[("train", &train_ds), ("val", &val_ds)])?;
        for m in [&result.train, &result.val] {
            let kept: BTreeSet<String> = m.ids().into_iter().collect();
            let (ds, warnings) = filter_coco(&merged, &kept, true);
            c.warnings().emit(warnings)?;
            write_coco(&ds, &c.out.join(format!("{}.json", m.name)))?;
        }
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut spec = CorpusSpec::new(&a.out, a.seed);
    spec.bases = a.bases;
    spec.val_bases = a.val_bases.unwrap_or(a.bases / 5);
    spec.size = a.size;
    spec.exact_duplicates = a.exact;
    spec.augmented_duplicates = a.augmented;
    spec.leaks = a.leaks;
    spec.coco_dir = a.coco.then(|| a.out.clone());
    let truth = generate(&spec)?;
    report::write(&a.out, "ground_truth.json", &truth.to_json())?;
    println!(
        "wrote {} train and {} val images to {}",
        truth.train_images,
        truth.val_images,
        a.out.display()
    );
    Ok(())
}
