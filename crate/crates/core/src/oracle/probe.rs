//! Memorization probe: feed a document's first `prefix` tokens to the
//! oracle and measure how far the greedy continuation exactly matches the
//! true suffix.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dedup::exact_key;
use crate::doc::Document;
use crate::error::Result;
use crate::oracle::GenerationOracle;
use crate::tokenize::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    HeldOut,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::HeldOut => "held_out",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeDoc {
    pub doc: Document,
    pub split: Split,
    /// Times this document occurs in the oracle's training corpus.
    pub occurrence_count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeResult {
    pub doc_id: String,
    pub split: Split,
    pub group: String,
    pub matched_len: usize,
    pub success: bool,
    pub occurrence_count: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct ProbeConfig {
    pub prefix: usize,
    pub generate: usize,
    pub match_threshold: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            prefix: 50,
            generate: 22,
            match_threshold: 22,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RateBucket {
    pub probed: u64,
    pub successes: u64,
}

impl RateBucket {
    pub fn rate(&self) -> f64 {
        if self.probed == 0 {
            0.0
        } else {
            self.successes as f64 / self.probed as f64
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProbeReport {
    pub results: Vec<ProbeResult>,
    /// Documents shorter than prefix + match_threshold tokens.
    pub skipped_too_short: u64,
    pub success_by_split: BTreeMap<String, RateBucket>,
    pub success_by_group: BTreeMap<String, RateBucket>,
    /// occurrence_count -> mean matched_len over probed docs.
    pub mean_matched_len_by_occurrence: BTreeMap<u64, f64>,
}

impl ProbeReport {
    pub fn success_rate(&self, split: Split) -> f64 {
        self.success_by_split
            .get(split.as_str())
            .map(RateBucket::rate)
            .unwrap_or(0.0)
    }
}

/// Exact-content occurrence counts over the oracle's training corpus, keyed
/// by normalized digest. Documents that normalize to nothing are skipped.
pub fn count_occurrences(training: &[Document]) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for doc in training {
        if let Ok(key) = exact_key(doc) {
            *counts.entry(key.hex()).or_insert(0) += 1;
        }
    }
    counts
}

pub fn probe_memorization(
    oracle: &dyn GenerationOracle,
    docs: &[ProbeDoc],
    tokenizer: &Tokenizer,
    config: ProbeConfig,
) -> Result<ProbeReport> {
    let generate = config.generate.max(config.match_threshold);
    let outcomes: Vec<Option<Result<ProbeResult>>> = docs
        .par_iter()
        .map(|pd| {
            let tokens: Vec<String> = tokenizer
                .tokenize(&pd.doc.text)
                .into_iter()
                .map(str::to_string)
                .collect();
            if tokens.len() < config.prefix + config.match_threshold {
                return None;
            }
            let prefix = &tokens[..config.prefix];
            let truth = &tokens[config.prefix..(config.prefix + generate).min(tokens.len())];
            Some(oracle.greedy_continue(prefix, generate).map(|generated| {
                let matched_len = generated
                    .iter()
                    .zip(truth)
                    .take_while(|(g, t)| g == t)
                    .count();
                ProbeResult {
                    doc_id: pd.doc.id.clone(),
                    split: pd.split,
                    group: pd.doc.source.clone(),
                    matched_len,
                    success: matched_len >= config.match_threshold,
                    occurrence_count: pd.occurrence_count,
                }
            }))
        })
        .collect();

    let mut report = ProbeReport::default();
    let mut matched_by_occ: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for outcome in outcomes {
        let Some(result) = outcome else {
            report.skipped_too_short += 1;
            continue;
        };
        let r = result?;
        let split = report
            .success_by_split
            .entry(r.split.as_str().to_string())
            .or_default();
        split.probed += 1;
        split.successes += r.success as u64;
        let group = report.success_by_group.entry(r.group.clone()).or_default();
        group.probed += 1;
        group.successes += r.success as u64;
        let occ = matched_by_occ.entry(r.occurrence_count).or_insert((0, 0));
        occ.0 += 1;
        occ.1 += r.matched_len as u64;
        report.results.push(r);
    }
    report.mean_matched_len_by_occurrence = matched_by_occ
        .into_iter()
        .map(|(c, (n, sum))| (c, sum as f64 / n as f64))
        .collect();
    Ok(report)
}
