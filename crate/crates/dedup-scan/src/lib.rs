//! Duplicate and train/val leakage detection for image datasets, with
//! file IO, a hash cache, COCO annotation handling and a CLI on top of
//! [`dedup_scan_core`].

pub mod cache;
pub mod cli;
pub mod coco;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
