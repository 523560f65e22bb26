//! Exact deduplication: md5 over whitespace- and punctuation-stripped text,
//! keep the first occurrence in canonical order.

use std::collections::HashMap;

use md5::{Digest, Md5};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::doc::{Document, OrderKey};
use crate::error::{Error, Result};
use crate::manifest::{ManifestBuilder, StageManifest};
use crate::tokenize::Tokenizer;

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Remove all whitespace and Unicode punctuation codepoints.
pub fn normalize(text: &str) -> String {
    text.chars()
        .filter(|&c| !c.is_whitespace() && !is_punctuation(c))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExactKey {
    pub digest: [u8; 16],
}

impl ExactKey {
    pub fn hex(&self) -> String {
        self.digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// md5 of the UTF-8 bytes of the normalized text. Documents that normalize
/// to the empty string get no key and are routed to a reject reason instead.
pub fn exact_key(doc: &Document) -> Result<ExactKey> {
    let normalized = normalize(&doc.text);
    if normalized.is_empty() {
        return Err(Error::EmptyAfterNormalize);
    }
    let digest: [u8; 16] = Md5::digest(normalized.as_bytes()).into();
    Ok(ExactKey { digest })
}

pub const REASON_EXACT_DUPLICATE: &str = "exact_duplicate";
pub const REASON_EMPTY_AFTER_NORMALIZE: &str = "empty_after_normalize";

/// For each key, keep the document with minimal order_key; the decision is a
/// pure function of the full input set, so the result is independent of
/// processing order.
pub fn exact_dedup(
    docs: &[Document],
    tokenizer: &Tokenizer,
    config_fingerprint: &str,
    seed: u64,
) -> Result<(Vec<Document>, StageManifest)> {
    let mut first_owner: HashMap<ExactKey, OrderKey> = HashMap::new();
    let keys: Vec<Option<ExactKey>> = docs.iter().map(|d| exact_key(d).ok()).collect();
    for (doc, key) in docs.iter().zip(&keys) {
        if let Some(key) = key {
            first_owner
                .entry(*key)
                .and_modify(|k| {
                    if doc.order_key < *k {
                        *k = doc.order_key;
                    }
                })
                .or_insert(doc.order_key);
        }
    }

    let mut builder = ManifestBuilder::new("dedup-exact", config_fingerprint, seed);
    let mut kept = Vec::new();
    for (doc, key) in docs.iter().zip(&keys) {
        let tokens = tokenizer.count(&doc.text) as u64;
        match key {
            None => builder.drop(doc, tokens, REASON_EMPTY_AFTER_NORMALIZE),
            Some(key) if first_owner[key] == doc.order_key => {
                builder.keep(doc, tokens);
                kept.push(doc.clone());
            }
            Some(_) => builder.drop(doc, tokens, REASON_EXACT_DUPLICATE),
        }
    }
    kept.sort_by_key(|d| d.order_key);
    Ok((kept, builder.finish()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str, shard: u32, record: u64) -> Document {
        Document::new(id, "books", text).with_order(shard, record)
    }

    #[test]
    fn punctuation_and_whitespace_do_not_matter() {
        let a = exact_key(&doc("a", "你好，世界！", 0, 0)).unwrap();
        let b = exact_key(&doc("b", "你好 世界", 0, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn md5_reference_vector() {
        // RFC 1321 test vector for "abc".
        let key = exact_key(&doc("a", "abc", 0, 0)).unwrap();
        assert_eq!(key.hex(), "900150983cd24fb0d6963f7d28e17f72");
    }

    #[test]
    fn punctuation_only_text_is_rejected() {
        assert!(matches!(
            exact_key(&doc("a", "，。！", 0, 0)),
            Err(Error::EmptyAfterNormalize)
        ));
    }

    #[test]
    fn first_occurrence_wins() {
        let docs = vec![
            doc("a", "相同 的 文本。", 0, 0),
            doc("b", "另一段文本。", 0, 1),
            doc("a2", "相同的文本", 0, 2),
        ];
        let t = Tokenizer::mixed_script(false);
        let (kept, manifest) = exact_dedup(&docs, &t, "fp", 0).unwrap();
        let ids: Vec<_> = kept.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
        assert_eq!(manifest.dropped_by_reason[REASON_EXACT_DUPLICATE], 1);
    }

    #[test]
    fn all_unique_stream_unchanged() {
        let docs: Vec<_> = (0..5)
            .map(|i| doc(&format!("d{i}"), &format!("文本{i}"), 0, i))
            .collect();
        let t = Tokenizer::mixed_script(false);
        let (kept, _) = exact_dedup(&docs, &t, "fp", 0).unwrap();
        assert_eq!(kept, docs);
    }

    #[test]
    fn thousand_copies_keep_one() {
        let docs: Vec<_> = (0..1000)
            .map(|i| doc(&format!("d{i}"), "同一段落内容", 0, i))
            .collect();
        let t = Tokenizer::mixed_script(false);
        let (kept, manifest) = exact_dedup(&docs, &t, "fp", 0).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "d0");
        assert!((manifest.filtered_fraction() - 0.999).abs() < 1e-12);
    }

    #[test]
    fn idempotent() {
        let docs = vec![
            doc("a", "文本甲。", 0, 0),
            doc("b", "文本甲", 0, 1),
            doc("c", "文本乙。", 0, 2),
        ];
        let t = Tokenizer::mixed_script(false);
        let (once, _) = exact_dedup(&docs, &t, "fp", 0).unwrap();
        let (twice, _) = exact_dedup(&once, &t, "fp", 0).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn shuffle_invariant_given_fixed_order_keys() {
        let mut docs = vec![
            doc("a", "文本甲。", 0, 0),
            doc("b", "文本甲", 1, 0),
            doc("c", "文本乙。", 1, 1),
        ];
        let t = Tokenizer::mixed_script(false);
        let (expected, _) = exact_dedup(&docs, &t, "fp", 0).unwrap();
        docs.reverse();
        let (shuffled, _) = exact_dedup(&docs, &t, "fp", 0).unwrap();
        assert_eq!(expected, shuffled);
    }
}
