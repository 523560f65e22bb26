//! Corpus statistics: per-group token/document counts, log-spaced document
//! length histograms, and per-stage filter rates joined from manifests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::doc::Document;
use crate::error::{Error, Result};
use crate::manifest::StageManifest;
use crate::mixture::group_of;
use crate::tokenize::Tokenizer;

/// Histogram bin b holds documents with token count in [2^b, 2^(b+1)).
pub const HISTOGRAM_BINS: usize = 24;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub documents: u64,
    pub tokens: u64,
    pub length_histogram: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageFilterRate {
    pub stage: String,
    pub input_count: u64,
    pub dropped_count: u64,
    pub filtered_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dimension: String,
    pub total_documents: u64,
    pub total_tokens: u64,
    pub per_group: BTreeMap<String, GroupStats>,
    pub stages: Vec<StageFilterRate>,
}

pub fn length_bin(tokens: u64) -> usize {
    if tokens == 0 {
        0
    } else {
        (63 - tokens.leading_zeros()) as usize
    }
    .min(HISTOGRAM_BINS - 1)
}

pub fn corpus_stats(
    docs: &[Document],
    dimension: &str,
    tokenizer: &Tokenizer,
    manifests: &[StageManifest],
) -> Result<CorpusStats> {
    // All joined manifests must come from the same run.
    if let Some(first) = manifests.first() {
        for m in &manifests[1..] {
            if m.config_fingerprint != first.config_fingerprint {
                return Err(Error::MixedFingerprints(
                    first.config_fingerprint.clone(),
                    m.config_fingerprint.clone(),
                ));
            }
        }
    }

    let mut stats = CorpusStats {
        dimension: dimension.to_string(),
        ..CorpusStats::default()
    };
    for doc in docs {
        let group = group_of(doc, dimension)?.to_string();
        let tokens = tokenizer.count(&doc.text) as u64;
        let entry = stats.per_group.entry(group).or_insert_with(|| GroupStats {
            documents: 0,
            tokens: 0,
            length_histogram: vec![0; HISTOGRAM_BINS],
        });
        entry.documents += 1;
        entry.tokens += tokens;
        entry.length_histogram[length_bin(tokens)] += 1;
        stats.total_documents += 1;
        stats.total_tokens += tokens;
    }
    for m in manifests {
        stats.stages.push(StageFilterRate {
            stage: m.stage.clone(),
            input_count: m.input_count,
            dropped_count: m.dropped_count,
            filtered_fraction: m.filtered_fraction(),
        });
    }
    Ok(stats)
}

impl CorpusStats {
    /// Aligned-column text table mirroring the manifest accounting:
    /// per-group %filtered (end-to-end), remaining tokens and proportion.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let header = format!(
            "{:<16} {:>12} {:>18} {:>12}\n",
            "group", "documents", "remaining_tokens", "proportion"
        );
        out.push_str(&header);
        out.push_str(&"-".repeat(header.len() - 1));
        out.push('\n');
        for (group, g) in &self.per_group {
            let proportion = if self.total_tokens == 0 {
                0.0
            } else {
                g.tokens as f64 / self.total_tokens as f64
            };
            out.push_str(&format!(
                "{:<16} {:>12} {:>18} {:>11.1}%\n",
                group,
                g.documents,
                g.tokens,
                proportion * 100.0
            ));
        }
        if !self.stages.is_empty() {
            out.push('\n');
            out.push_str(&format!("{:<16} {:>12} {:>12} {:>12}\n", "stage", "input", "dropped", "%filtered"));
            for s in &self.stages {
                out.push_str(&format!(
                    "{:<16} {:>12} {:>12} {:>11.1}%\n",
                    s.stage,
                    s.input_count,
                    s.dropped_count,
                    s.filtered_fraction * 100.0
                ));
            }
        }
        out
    }
}
