//! Per-stage accounting records.
//!
//! Every stage emits one manifest beside its output; the run summary joins
//! them into a corpus-statistics table. Conservation (kept + dropped = input,
//! for counts and for tokens, per source and in total) is checked at build
//! time, not assumed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::doc::Document;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceBreakdown {
    pub input_count: u64,
    pub kept_count: u64,
    pub dropped_count: u64,
    pub input_tokens: u64,
    pub kept_tokens: u64,
    #[serde(default)]
    pub dropped_by_reason: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub input_count: u64,
    pub kept_count: u64,
    pub dropped_count: u64,
    pub dropped_by_reason: BTreeMap<String, u64>,
    pub input_tokens: u64,
    pub kept_tokens: u64,
    pub per_source: BTreeMap<String, SourceBreakdown>,
    pub config_fingerprint: String,
    pub seed: u64,
}

impl StageManifest {
    pub fn filtered_fraction(&self) -> f64 {
        if self.input_count == 0 {
            0.0
        } else {
            self.dropped_count as f64 / self.input_count as f64
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&content)?)
    }
}

/// Accumulates keep/drop decisions for one stage.
pub struct ManifestBuilder {
    manifest: StageManifest,
}

impl ManifestBuilder {
    pub fn new(stage: &str, config_fingerprint: &str, seed: u64) -> Self {
        Self {
            manifest: StageManifest {
                stage: stage.to_string(),
                input_count: 0,
                kept_count: 0,
                dropped_count: 0,
                dropped_by_reason: BTreeMap::new(),
                input_tokens: 0,
                kept_tokens: 0,
                per_source: BTreeMap::new(),
                config_fingerprint: config_fingerprint.to_string(),
                seed,
            },
        }
    }

    pub fn keep(&mut self, doc: &Document, tokens: u64) {
        let m = &mut self.manifest;
        m.input_count += 1;
        m.kept_count += 1;
        m.input_tokens += tokens;
        m.kept_tokens += tokens;
        let s = m.per_source.entry(doc.source.clone()).or_default();
        s.input_count += 1;
        s.kept_count += 1;
        s.input_tokens += tokens;
        s.kept_tokens += tokens;
    }

    pub fn drop(&mut self, doc: &Document, tokens: u64, reason: &str) {
        let m = &mut self.manifest;
        m.input_count += 1;
        m.dropped_count += 1;
        m.input_tokens += tokens;
        *m.dropped_by_reason.entry(reason.to_string()).or_default() += 1;
        let s = m.per_source.entry(doc.source.clone()).or_default();
        s.input_count += 1;
        s.dropped_count += 1;
        s.input_tokens += tokens;
        *s.dropped_by_reason.entry(reason.to_string()).or_default() += 1;
    }

    pub fn finish(self) -> Result<StageManifest> {
        let m = self.manifest;
        if m.kept_count + m.dropped_count != m.input_count {
            return Err(Error::ManifestImbalance {
                stage: m.stage.clone(),
                kept: m.kept_count,
                dropped: m.dropped_count,
                input: m.input_count,
            });
        }
        let mut src_input = 0;
        let mut src_kept = 0;
        let mut src_dropped = 0;
        for s in m.per_source.values() {
            src_input += s.input_count;
            src_kept += s.kept_count;
            src_dropped += s.dropped_count;
        }
        if src_input != m.input_count || src_kept != m.kept_count || src_dropped != m.dropped_count
        {
            return Err(Error::ManifestImbalance {
                stage: m.stage.clone(),
                kept: src_kept,
                dropped: src_dropped,
                input: src_input,
            });
        }
        Ok(m)
    }
}
