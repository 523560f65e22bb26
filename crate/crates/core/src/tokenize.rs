//! Pluggable tokenization; all pipeline token counts flow through here.
//!
//! The default mixed-script rule: each CJK ideograph is one token, each
//! maximal run of other letters/digits is one token, each punctuation
//! codepoint is one token, and whitespace runs are tokens iff
//! `preserve_whitespace` is set. An external vocabulary file (one token per
//! line, line number = id) can replace the default rule for packing and
//! probing; it is matched greedily longest-first.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hash::fingerprint_hex;
use crate::lang::is_cjk_ideograph;

#[derive(Debug, Clone)]
enum Kind {
    MixedScript,
    Vocab(VocabTable),
}

#[derive(Debug, Clone)]
pub struct VocabTable {
    token_to_id: HashMap<String, u32>,
    max_token_chars: usize,
    fingerprint: String,
}

impl VocabTable {
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut token_to_id = HashMap::new();
        let mut max_token_chars = 1;
        let mut buf = String::new();
        for (id, tok) in tokens.into_iter().enumerate() {
            max_token_chars = max_token_chars.max(tok.chars().count());
            buf.push_str(&tok);
            buf.push('\n');
            token_to_id.entry(tok).or_insert(id as u32);
        }
        let fingerprint = fingerprint_hex(buf.as_bytes());
        Self {
            token_to_id,
            max_token_chars,
            fingerprint,
        }
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    name: String,
    preserve_whitespace: bool,
    kind: Kind,
}

impl Tokenizer {
    /// The deterministic mixed-script default.
    pub fn mixed_script(preserve_whitespace: bool) -> Self {
        Self {
            name: "mixed-script".into(),
            preserve_whitespace,
            kind: Kind::MixedScript,
        }
    }

    /// Vocabulary file: one token per line, line number = id.
    pub fn from_vocab_file(path: impl AsRef<Path>, preserve_whitespace: bool) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let table = VocabTable::from_tokens(content.lines().map(str::to_string));
        Ok(Self {
            name: format!("vocab:{}", path.display()),
            preserve_whitespace,
            kind: Kind::Vocab(table),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn preserve_whitespace(&self) -> bool {
        self.preserve_whitespace
    }

    /// Identifies the tokenizer in manifests; two runs with the same
    /// fingerprint count tokens identically.
    pub fn fingerprint(&self) -> String {
        match &self.kind {
            Kind::MixedScript => format!(
                "mixed-script/ws={}",
                if self.preserve_whitespace { 1 } else { 0 }
            ),
            Kind::Vocab(v) => format!(
                "vocab-{}/ws={}",
                v.fingerprint,
                if self.preserve_whitespace { 1 } else { 0 }
            ),
        }
    }

    pub fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        match &self.kind {
            Kind::MixedScript => self.tokenize_mixed(text),
            Kind::Vocab(table) => self.tokenize_vocab(text, table),
        }
    }

    pub fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }

    /// Inverse of `tokenize` when `preserve_whitespace` is on.
    pub fn detokenize(&self, tokens: &[&str]) -> String {
        tokens.concat()
    }

    fn tokenize_mixed<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let mut out = Vec::new();
        let mut iter = text.char_indices().peekable();
        while let Some((start, c)) = iter.next() {
            if c.is_whitespace() {
                let mut end = start + c.len_utf8();
                while let Some(&(i, next)) = iter.peek() {
                    if next.is_whitespace() {
                        end = i + next.len_utf8();
                        iter.next();
                    } else {
                        break;
                    }
                }
                if self.preserve_whitespace {
                    out.push(&text[start..end]);
                }
            } else if is_cjk_ideograph(c) {
                out.push(&text[start..start + c.len_utf8()]);
            } else if c.is_alphanumeric() {
                let mut end = start + c.len_utf8();
                while let Some(&(i, next)) = iter.peek() {
                    if next.is_alphanumeric() && !is_cjk_ideograph(next) {
                        end = i + next.len_utf8();
                        iter.next();
                    } else {
                        break;
                    }
                }
                out.push(&text[start..end]);
            } else {
                out.push(&text[start..start + c.len_utf8()]);
            }
        }
        out
    }

    /// Greedy longest-match against the vocabulary; codepoints with no
    /// covering vocab entry become single-codepoint tokens.
    fn tokenize_vocab<'a>(&self, text: &'a str, table: &VocabTable) -> Vec<&'a str> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < chars.len() {
            let (start, c) = chars[pos];
            if c.is_whitespace() && !self.preserve_whitespace {
                // whitespace not covered by a vocab token is droppable
                let lookahead_match = longest_match(text, &chars, pos, table);
                match lookahead_match {
                    Some(len) => {
                        let end = end_offset(text, &chars, pos + len);
                        out.push(&text[start..end]);
                        pos += len;
                    }
                    None => pos += 1,
                }
                continue;
            }
            match longest_match(text, &chars, pos, table) {
                Some(len) => {
                    let end = end_offset(text, &chars, pos + len);
                    out.push(&text[start..end]);
                    pos += len;
                }
                None => {
                    let end = end_offset(text, &chars, pos + 1);
                    out.push(&text[start..end]);
                    pos += 1;
                }
            }
        }
        out
    }
}

fn end_offset(text: &str, chars: &[(usize, char)], idx: usize) -> usize {
    chars.get(idx).map_or(text.len(), |&(i, _)| i)
}

fn longest_match(
    text: &str,
    chars: &[(usize, char)],
    pos: usize,
    table: &VocabTable,
) -> Option<usize> {
    let start = chars[pos].0;
    let max = table.max_token_chars.min(chars.len() - pos);
    for len in (1..=max).rev() {
        let end = end_offset(text, chars, pos + len);
        if table.token_to_id.contains_key(&text[start..end]) {
            return Some(len);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mixed_script_rule() {
        let t = Tokenizer::mixed_script(false);
        assert_eq!(t.tokenize("Wiki是模型"), vec!["Wiki", "是", "模", "型"]);
    }

    #[test]
    fn tabs_preserved_as_tokens() {
        let t = Tokenizer::mixed_script(true);
        assert_eq!(t.tokenize("a\tb"), vec!["a", "\t", "b"]);
    }

    #[test]
    fn empty_input() {
        let t = Tokenizer::mixed_script(true);
        assert!(t.tokenize("").is_empty());
    }

    #[test]
    fn punctuation_is_single_tokens() {
        let t = Tokenizer::mixed_script(false);
        assert_eq!(t.tokenize("你好，world!"), vec!["你", "好", "，", "world", "!"]);
    }

    #[test]
    fn vocab_longest_match() {
        let table: Vec<String> = ["你好", "你", "好", "世界", "a", "ab"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let t = Tokenizer {
            name: "test".into(),
            preserve_whitespace: false,
            kind: Kind::Vocab(VocabTable::from_tokens(table)),
        };
        assert_eq!(t.tokenize("你好世界"), vec!["你好", "世界"]);
        assert_eq!(t.tokenize("abz"), vec!["ab", "z"]);
    }

    proptest! {
        #[test]
        fn round_trip_with_preserved_whitespace(s in "[ \t\n a-z0-9你好模型，。]{0,60}") {
            let t = Tokenizer::mixed_script(true);
            let toks = t.tokenize(&s);
            prop_assert_eq!(t.detokenize(&toks), s);
        }

        #[test]
        fn concatenation_merges_at_most_one_run(
            a in "[a-z0-9你好。]{0,20}",
            b in "[a-z0-9你好。]{0,20}",
        ) {
            let t = Tokenizer::mixed_script(false);
            let joined = format!("{a}{b}");
            let n = t.count(&joined);
            let na = t.count(&a);
            let nb = t.count(&b);
            prop_assert!(n <= na + nb + 1);
            prop_assert!(n + 1 >= na + nb);
        }

        #[test]
        fn deterministic(s in ".{0,40}") {
            let t = Tokenizer::mixed_script(true);
            prop_assert_eq!(t.tokenize(&s), t.tokenize(&s));
        }
    }
}
