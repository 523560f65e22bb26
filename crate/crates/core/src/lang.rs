//! Codepoint-class language detection.
//!
//! A document is tagged `zh` when the share of CJK Unified Ideographs among
//! its alphabetic-or-ideographic codepoints reaches the threshold. Digits,
//! punctuation and whitespace are excluded from the denominator.

use crate::error::{Error, Result};

pub const DEFAULT_CJK_THRESHOLD: f64 = 0.25;

/// True for codepoints in the CJK Unified Ideograph blocks (URO + extensions).
pub fn is_cjk_ideograph(c: char) -> bool {
    matches!(u32::from(c),
        0x4E00..=0x9FFF          // URO
        | 0x3400..=0x4DBF        // Extension A
        | 0x20000..=0x2A6DF      // Extension B
        | 0x2A700..=0x2B73F      // Extension C
        | 0x2B740..=0x2B81F      // Extension D
        | 0x2B820..=0x2CEAF      // Extension E
        | 0x2CEB0..=0x2EBEF      // Extension F
        | 0x30000..=0x3134A      // Extension G
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct LangResult {
    pub tag: String,
    pub cjk_ratio: f64,
}

pub fn detect_language(text: &str, threshold: f64) -> Result<LangResult> {
    let mut letters = 0u64;
    let mut cjk = 0u64;
    for c in text.chars() {
        if c.is_alphabetic() {
            letters += 1;
            if is_cjk_ideograph(c) {
                cjk += 1;
            }
        }
    }
    if letters == 0 {
        return Err(Error::IndeterminateLanguage);
    }
    let cjk_ratio = cjk as f64 / letters as f64;
    let tag = if cjk_ratio >= threshold { "zh" } else { "other" };
    Ok(LangResult {
        tag: tag.to_string(),
        cjk_ratio,
    })
}
