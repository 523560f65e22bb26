//! Perplexity-argmin classification: score each label's verbalizer string
//! as a continuation of the prompt and pick the lowest perplexity.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::oracle::GenerationOracle;
use crate::tokenize::Tokenizer;

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: String,
    /// Per-label perplexity: exp(−logprob / token length).
    pub scores: BTreeMap<String, f64>,
}

pub fn perplexity_classify(
    oracle: &dyn GenerationOracle,
    prompt: &str,
    verbalizer: &BTreeMap<String, String>,
    tokenizer: &Tokenizer,
) -> Result<Classification> {
    if verbalizer.is_empty() {
        return Err(Error::EmptyVerbalizer);
    }
    let context: Vec<String> = tokenizer
        .tokenize(prompt)
        .into_iter()
        .map(str::to_string)
        .collect();

    let mut scores = BTreeMap::new();
    let mut best: Option<(String, f64)> = None;
    // BTreeMap order makes the tie-break lexicographic for free: only a
    // strictly lower perplexity displaces an earlier label.
    for (label, text) in verbalizer {
        let tokens: Vec<String> = tokenizer
            .tokenize(text)
            .into_iter()
            .map(str::to_string)
            .collect();
        if tokens.is_empty() {
            return Err(Error::EmptyVerbalizerTokens(label.clone()));
        }
        let lp = oracle.logprob(&context, &tokens)?;
        let perplexity = (-lp / tokens.len() as f64).exp();
        scores.insert(label.clone(), perplexity);
        match &best {
            Some((_, p)) if perplexity >= *p => {}
            _ => best = Some((label.clone(), perplexity)),
        }
    }
    let (label, _) = best.expect("non-empty verbalizer");
    Ok(Classification { label, scores })
}
