//! Rule-based filters, checked in a fixed declared order; the first failing
//! rule names the drop reason.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::doc::Document;
use crate::tokenize::Tokenizer;

const CODE_CHARS: &[char] = &['{', '}', '[', ']', '(', ')', ';', '<', '>', '=', '&', '|'];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    /// Reject documents with fewer tokens; `None` disables.
    pub min_tokens: Option<usize>,
    /// Reject documents where code-ish punctuation exceeds this fraction.
    pub max_code_char_density: Option<f64>,
    /// Reject documents where non-alphanumeric non-whitespace codepoints
    /// exceed this fraction.
    pub max_symbol_ratio: Option<f64>,
    /// Reject documents with fewer content lines (lines ending in terminal
    /// punctuation).
    pub min_content_lines: Option<usize>,
    pub terminal_punctuation: BTreeSet<char>,
    /// Case-insensitive substring blacklist; empty disables.
    pub blacklist: Vec<String>,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self {
            min_tokens: Some(32),
            max_code_char_density: Some(0.05),
            max_symbol_ratio: Some(0.3),
            min_content_lines: Some(3),
            terminal_punctuation: ['。', '！', '？', '.', '!', '?'].into(),
            blacklist: vec!["lorem ipsum".to_string()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    TooShort,
    CodeLike,
    SymbolHeavy,
    TooFewLines,
    Placeholder,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::TooShort => "too_short",
            RejectReason::CodeLike => "code_like",
            RejectReason::SymbolHeavy => "symbol_heavy",
            RejectReason::TooFewLines => "too_few_lines",
            RejectReason::Placeholder => "placeholder",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleVerdict {
    Keep,
    Reject(RejectReason),
}

pub fn apply_rules(doc: &Document, rules: &RuleSet, tokenizer: &Tokenizer) -> RuleVerdict {
    let text = doc.text.as_str();

    if let Some(min) = rules.min_tokens {
        if tokenizer.count(text) < min {
            return RuleVerdict::Reject(RejectReason::TooShort);
        }
    }

    let total_chars = text.chars().count();
    if let Some(max) = rules.max_code_char_density {
        let code = text.chars().filter(|c| CODE_CHARS.contains(c)).count();
        if total_chars > 0 && code as f64 / total_chars as f64 > max {
            return RuleVerdict::Reject(RejectReason::CodeLike);
        }
    }

    if let Some(max) = rules.max_symbol_ratio {
        let symbols = text
            .chars()
            .filter(|c| !c.is_alphanumeric() && !c.is_whitespace())
            .count();
        if total_chars > 0 && symbols as f64 / total_chars as f64 > max {
            return RuleVerdict::Reject(RejectReason::SymbolHeavy);
        }
    }

    if let Some(min) = rules.min_content_lines {
        let content_lines = text
            .lines()
            .filter(|line| {
                line.trim_end()
                    .chars()
                    .last()
                    .is_some_and(|c| rules.terminal_punctuation.contains(&c))
            })
            .count();
        if content_lines < min {
            return RuleVerdict::Reject(RejectReason::TooFewLines);
        }
    }

    if !rules.blacklist.is_empty() {
        let lower = text.to_lowercase();
        if rules.blacklist.iter().any(|p| lower.contains(&p.to_lowercase())) {
            return RuleVerdict::Reject(RejectReason::Placeholder);
        }
    }

    RuleVerdict::Keep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Document {
        Document::new("d", "books", text)
    }

    fn tok() -> Tokenizer {
        Tokenizer::mixed_script(false)
    }

    /// Three lines of plausible prose, each ending in terminal punctuation.
    fn clean_text() -> String {
        let line = "今天的天气非常好我们一起去公园散步看看风景。";
        format!("{line}\n{line}\n{line}\n")
    }

    #[test]
    fn clean_paragraph_is_kept() {
        assert_eq!(
            apply_rules(&doc(&clean_text()), &RuleSet::default(), &tok()),
            RuleVerdict::Keep
        );
    }

    #[test]
    fn code_heavy_document_rejected_as_code_like() {
        // 60% of codepoints are '{' and ';', padded with enough prose tokens
        // that the earlier length rule passes.
        let mut text = String::new();
        for _ in 0..40 {
            text.push('国');
        }
        for _ in 0..30 {
            text.push('{');
            text.push(';');
        }
        assert_eq!(
            apply_rules(&doc(&text), &RuleSet::default(), &tok()),
            RuleVerdict::Reject(RejectReason::CodeLike)
        );
    }

    #[test]
    fn blacklist_rejects_placeholder() {
        let text = format!("{}Lorem Ipsum dolor sit amet。\n", clean_text());
        assert_eq!(
            apply_rules(&doc(&text), &RuleSet::default(), &tok()),
            RuleVerdict::Reject(RejectReason::Placeholder)
        );
    }

    #[test]
    fn short_document_rejected_first() {
        assert_eq!(
            apply_rules(&doc("短。"), &RuleSet::default(), &tok()),
            RuleVerdict::Reject(RejectReason::TooShort)
        );
    }

    #[test]
    fn single_line_fails_content_line_rule() {
        let text = "今天的天气非常好我们一起去公园散步看看风景真是太棒了朋友们都来了。";
        assert_eq!(
            apply_rules(&doc(text), &RuleSet::default(), &tok()),
            RuleVerdict::Reject(RejectReason::TooFewLines)
        );
    }

    #[test]
    fn disabled_rules_never_reject() {
        let rules = RuleSet {
            min_tokens: None,
            max_code_char_density: None,
            max_symbol_ratio: None,
            min_content_lines: None,
            blacklist: vec![],
            ..RuleSet::default()
        };
        assert_eq!(
            apply_rules(&doc("{{{{;;;;"), &rules, &tok()),
            RuleVerdict::Keep
        );
    }
}
