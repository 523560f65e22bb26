//! Benchmark decontamination by the 17-gram / 34-gram rule.
//!
//! An index holds a 64-bit hash of every n-token window of every eval
//! document (run tokenizer, whitespace tokens excluded). A training document
//! is removed when at least two of its distinct 17-gram keys hit the index,
//! or when some 34-token window hits with all 18 of its constituent
//! 17-grams. With 64-bit keys the collision probability for an index of m
//! shingles and a corpus of w windows is about m*w / 2^64; at desk scale
//! (m, w <= 10^9) that stays below 5e-2 per full run and below 1e-10 per
//! document pair.
//!
//! Index file layout (little-endian):
//!   magic "CIDX0001" | u32 n | u32 fp_len | tokenizer fp bytes
//!   | u32 eval_fp_len | eval fp bytes | u64 count | u64 key * count (sorted)

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::doc::Document;
use crate::error::{Error, Result};
use crate::hash::{fingerprint_hex, hash_tokens, SHINGLE_SEED};
use crate::tokenize::Tokenizer;

const MAGIC: &[u8; 8] = b"CIDX0001";
pub const DEFAULT_NGRAM: usize = 17;

#[derive(Debug, Clone)]
pub struct ContaminationIndex {
    pub n: usize,
    pub tokenizer_fingerprint: String,
    pub eval_fingerprint: String,
    keys: HashSet<u64>,
}

/// How matched 17-grams are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapSemantics {
    /// Every distinct matched window counts, even when windows overlap.
    /// A single shared 18-token span therefore yields two matches. Strict,
    /// removes more.
    #[default]
    Overlapping,
    /// Greedy non-overlapping count: after a match, skip n tokens.
    Disjoint,
}

fn content_tokens<'a>(text: &'a str, tokenizer: &Tokenizer) -> Vec<&'a str> {
    tokenizer
        .tokenize(text)
        .into_iter()
        .filter(|t| !t.chars().all(char::is_whitespace))
        .collect()
}

fn window_keys(tokens: &[&str], n: usize) -> Vec<u64> {
    if tokens.len() < n {
        return Vec::new();
    }
    tokens
        .windows(n)
        .map(|w| hash_tokens(w, SHINGLE_SEED))
        .collect()
}

/// Build the index from held-out eval documents. Idempotent under
/// duplicated eval docs; an empty eval set yields a valid vacuous index.
pub fn build_eval_index(
    eval_docs: &[Document],
    n: usize,
    tokenizer: &Tokenizer,
) -> Result<ContaminationIndex> {
    if n < 1 {
        return Err(Error::InvalidOrder);
    }
    let mut keys = HashSet::new();
    let mut fp_material = Vec::new();
    let mut doc_digests: Vec<u64> = eval_docs
        .iter()
        .map(|d| {
            crate::hash::hash64_seeded(d.text.as_bytes(), SHINGLE_SEED)
                ^ crate::hash::hash64(d.id.as_bytes())
        })
        .collect();
    doc_digests.sort_unstable();
    doc_digests.dedup();
    for d in &doc_digests {
        fp_material.extend_from_slice(&d.to_le_bytes());
    }
    for doc in eval_docs {
        let tokens = content_tokens(&doc.text, tokenizer);
        keys.extend(window_keys(&tokens, n));
    }
    Ok(ContaminationIndex {
        n,
        tokenizer_fingerprint: tokenizer.fingerprint(),
        eval_fingerprint: fingerprint_hex(&fp_material),
        keys,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Remove {
        matched_ngrams: usize,
        has_double_window: bool,
    },
}

impl Decision {
    pub fn is_remove(&self) -> bool {
        matches!(self, Decision::Remove { .. })
    }
}

impl ContaminationIndex {
    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn contains(&self, key: u64) -> bool {
        self.keys.contains(&key)
    }

    pub fn merge(&mut self, other: &ContaminationIndex) {
        self.keys.extend(other.keys.iter().copied());
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        w.write_all(MAGIC).map_err(io_err)?;
        w.write_all(&(self.n as u32).to_le_bytes()).map_err(io_err)?;
        let tfp = self.tokenizer_fingerprint.as_bytes();
        w.write_all(&(tfp.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(tfp).map_err(io_err)?;
        let efp = self.eval_fingerprint.as_bytes();
        w.write_all(&(efp.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(efp).map_err(io_err)?;
        let mut sorted: Vec<u64> = self.keys.iter().copied().collect();
        sorted.sort_unstable();
        w.write_all(&(sorted.len() as u64).to_le_bytes()).map_err(io_err)?;
        for key in sorted {
            w.write_all(&key.to_le_bytes()).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut r = BufReader::new(File::open(path).map_err(io_err)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(Error::BadFormat {
                path: path.to_path_buf(),
                reason: "bad magic".into(),
            });
        }
        let mut b4 = [0u8; 4];
        let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
            r.read_exact(&mut b4).map_err(io_err)?;
            Ok(u32::from_le_bytes(b4))
        };
        let n = read_u32(&mut r)? as usize;
        let tfp_len = read_u32(&mut r)? as usize;
        let mut tfp = vec![0u8; tfp_len];
        r.read_exact(&mut tfp).map_err(io_err)?;
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(io_err)?;
        let efp_len = u32::from_le_bytes(b4) as usize;
        let mut efp = vec![0u8; efp_len];
        r.read_exact(&mut efp).map_err(io_err)?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(io_err)?;
        let count = u64::from_le_bytes(b8);
        let mut keys = HashSet::with_capacity(count as usize);
        for _ in 0..count {
            r.read_exact(&mut b8).map_err(io_err)?;
            keys.insert(u64::from_le_bytes(b8));
        }
        let utf8 = |v: Vec<u8>| {
            String::from_utf8(v).map_err(|_| Error::BadFormat {
                path: path.to_path_buf(),
                reason: "fingerprint not UTF-8".into(),
            })
        };
        Ok(Self {
            n,
            tokenizer_fingerprint: utf8(tfp)?,
            eval_fingerprint: utf8(efp)?,
            keys,
        })
    }
}

/// Apply the removal rule to one document: remove iff >= 2 matched n-grams
/// (under the configured semantics) or one matched 2n-token window.
pub fn check_document(
    doc: &Document,
    index: &ContaminationIndex,
    tokenizer: &Tokenizer,
    semantics: OverlapSemantics,
) -> Decision {
    let tokens = content_tokens(&doc.text, tokenizer);
    let keys = window_keys(&tokens, index.n);
    if keys.is_empty() {
        return Decision::Keep;
    }
    let hits: Vec<bool> = keys.iter().map(|k| index.contains(*k)).collect();

    let matched_ngrams = match semantics {
        OverlapSemantics::Overlapping => {
            let mut distinct = HashSet::new();
            for (key, hit) in keys.iter().zip(&hits) {
                if *hit {
                    distinct.insert(*key);
                }
            }
            distinct.len()
        }
        OverlapSemantics::Disjoint => {
            let mut count = 0;
            let mut i = 0;
            while i < hits.len() {
                if hits[i] {
                    count += 1;
                    i += index.n;
                } else {
                    i += 1;
                }
            }
            count
        }
    };

    // A 2n-token window matches iff all n+1 of its constituent n-grams hit.
    let run_len = index.n + 1;
    let has_double_window = hits
        .windows(run_len)
        .any(|w| w.iter().all(|&h| h));

    if matched_ngrams >= 2 || has_double_window {
        Decision::Remove {
            matched_ngrams,
            has_double_window,
        }
    } else {
        Decision::Keep
    }
}

pub const REASON_CONTAMINATED: &str = "contaminated";

#[cfg(test)]
mod tests {
    use super::*;

    fn tok() -> Tokenizer {
        Tokenizer::mixed_script(false)
    }

    /// Synthetic token streams: single ideographs drawn from a pool so each
    /// char is one token under the default tokenizer.
    fn text_of(ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| char::from_u32(0x4E00 + (i % 20000)).unwrap())
            .collect()
    }

    fn doc(text: &str) -> Document {
        Document::new("d", "books", text)
    }

    #[test]
    fn window_count_is_len_minus_n_plus_one() {
        let eval = vec![doc(&text_of(&(0..20).collect::<Vec<_>>()))];
        let index = build_eval_index(&eval, 17, &tok()).unwrap();
        assert_eq!(index.len(), 4); // 20 - 17 + 1
    }

    #[test]
    fn short_eval_doc_contributes_no_keys() {
        let eval = vec![doc(&text_of(&(0..16).collect::<Vec<_>>()))];
        let index = build_eval_index(&eval, 17, &tok()).unwrap();
        assert!(index.is_empty());
    }

    #[test]
    fn duplicate_eval_docs_do_not_change_the_index() {
        let d = doc(&text_of(&(0..30).collect::<Vec<_>>()));
        let once = build_eval_index(&[d.clone()], 17, &tok()).unwrap();
        let twice = build_eval_index(&[d.clone(), d], 17, &tok()).unwrap();
        assert_eq!(once.len(), twice.len());
        assert_eq!(once.eval_fingerprint, twice.eval_fingerprint);
    }

    #[test]
    fn forty_token_shared_span_triggers_double_window() {
        let eval_ids: Vec<u32> = (1000..1100).collect();
        let index = build_eval_index(&[doc(&text_of(&eval_ids))], 17, &tok()).unwrap();
        // Train doc shares a contiguous 40-token span, embedded in unique text.
        let mut train: Vec<u32> = (5000..5030).collect();
        train.extend(1010..1050);
        train.extend(6000..6030);
        match check_document(&doc(&text_of(&train)), &index, &tok(), OverlapSemantics::default()) {
            Decision::Remove {
                has_double_window, ..
            } => assert!(has_double_window),
            Decision::Keep => panic!("40-token overlap must remove"),
        }
    }

    #[test]
    fn exactly_one_17_token_span_is_kept() {
        let eval_ids: Vec<u32> = (1000..1100).collect();
        let index = build_eval_index(&[doc(&text_of(&eval_ids))], 17, &tok()).unwrap();
        let mut train: Vec<u32> = (5000..5030).collect();
        train.extend(1010..1027); // exactly 17 shared tokens
        train.extend(6000..6030);
        assert_eq!(
            check_document(&doc(&text_of(&train)), &index, &tok(), OverlapSemantics::default()),
            Decision::Keep
        );
    }

    #[test]
    fn two_disjoint_spans_remove() {
        let eval_ids: Vec<u32> = (1000..1100).collect();
        let index = build_eval_index(&[doc(&text_of(&eval_ids))], 17, &tok()).unwrap();
        let mut train: Vec<u32> = (5000..5030).collect();
        train.extend(1000..1017);
        train.extend(6000..6030);
        train.extend(1050..1067);
        train.extend(7000..7030);
        match check_document(&doc(&text_of(&train)), &index, &tok(), OverlapSemantics::default()) {
            Decision::Remove { matched_ngrams, .. } => assert_eq!(matched_ngrams, 2),
            Decision::Keep => panic!("two disjoint spans must remove"),
        }
    }

    #[test]
    fn eighteen_token_span_splits_by_semantics() {
        // 18 shared tokens = 2 overlapping 17-grams = removal under strict
        // semantics, kept under disjoint counting.
        let eval_ids: Vec<u32> = (1000..1100).collect();
        let index = build_eval_index(&[doc(&text_of(&eval_ids))], 17, &tok()).unwrap();
        let mut train: Vec<u32> = (5000..5030).collect();
        train.extend(1010..1028); // 18 tokens
        train.extend(6000..6030);
        let d = doc(&text_of(&train));
        assert!(check_document(&d, &index, &tok(), OverlapSemantics::Overlapping).is_remove());
        assert_eq!(
            check_document(&d, &index, &tok(), OverlapSemantics::Disjoint),
            Decision::Keep
        );
    }

    #[test]
    fn no_overlap_is_always_kept() {
        let eval_ids: Vec<u32> = (1000..1100).collect();
        let index = build_eval_index(&[doc(&text_of(&eval_ids))], 17, &tok()).unwrap();
        let train: Vec<u32> = (8000..8100).collect();
        assert_eq!(
            check_document(&doc(&text_of(&train)), &index, &tok(), OverlapSemantics::default()),
            Decision::Keep
        );
    }

    #[test]
    fn adding_eval_docs_never_flips_remove_to_keep() {
        let eval_a: Vec<u32> = (1000..1100).collect();
        let mut index = build_eval_index(&[doc(&text_of(&eval_a))], 17, &tok()).unwrap();
        let mut train: Vec<u32> = (5000..5030).collect();
        train.extend(1010..1050);
        let d = doc(&text_of(&train));
        assert!(check_document(&d, &index, &tok(), OverlapSemantics::default()).is_remove());
        let eval_b: Vec<u32> = (2000..2100).collect();
        let more = build_eval_index(&[doc(&text_of(&eval_b))], 17, &tok()).unwrap();
        index.merge(&more);
        assert!(check_document(&d, &index, &tok(), OverlapSemantics::default()).is_remove());
    }

    #[test]
    fn index_file_round_trips() {
        let eval_ids: Vec<u32> = (0..60).collect();
        let index = build_eval_index(&[doc(&text_of(&eval_ids))], 17, &tok()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("contamination.idx");
        index.save(&path).unwrap();
        let loaded = ContaminationIndex::load(&path).unwrap();
        assert_eq!(loaded.n, index.n);
        assert_eq!(loaded.len(), index.len());
        assert_eq!(loaded.tokenizer_fingerprint, index.tokenizer_fingerprint);
        assert_eq!(loaded.eval_fingerprint, index.eval_fingerprint);
    }
}
