//! Deterministic corpus-curation and multitask-prompt-data toolkit.
//!
//! Cleans, deduplicates, decontaminates and rebalances line-delimited text
//! corpora, builds packed multitask prompt samples, and probes a generation
//! oracle for memorization. Every stage is shardable, seeded and emits an
//! accounting manifest so reruns are byte-reproducible.

pub mod dedup;
pub mod decontam;
pub mod doc;
pub mod error;
pub mod hash;
pub mod io;
pub mod lang;
pub mod manifest;
pub mod mixture;
pub mod oracle;
pub mod pipeline;
pub mod prompt;
pub mod quality;
pub mod sample;
pub mod stats;
pub mod tokenize;

pub use doc::{Document, OrderKey};
pub use error::{Error, Result};
pub use manifest::{ManifestBuilder, StageManifest};
pub use tokenize::Tokenizer;
