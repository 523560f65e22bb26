//! Backoff n-gram oracle: a cheap deterministic stand-in for a large model.
//!
//! Probabilities use interpolated absolute discounting with a fixed
//! discount: at each order, `D` is subtracted from every observed successor
//! count and the freed mass is spread over the next-lower order. The
//! unigram level interpolates with a uniform distribution over the closed
//! vocabulary (which includes `<unk>`), so every token has positive mass
//! at every context and the distribution sums to exactly 1.

use std::collections::{BTreeSet, HashMap};

use crate::doc::Document;
use crate::error::{Error, Result};
use crate::oracle::GenerationOracle;
use crate::tokenize::Tokenizer;

pub const DISCOUNT: f64 = 0.75;

const UNK: u32 = 0;
const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, Default)]
struct SuccessorTable {
    total: u64,
    succ: HashMap<u32, u64>,
}

#[derive(Debug, Clone)]
pub struct BackoffNGramOracle {
    order: usize,
    vocab: Vec<String>,
    ids: HashMap<String, u32>,
    unigram: HashMap<u32, u64>,
    unigram_total: u64,
    /// Tables for orders 2..=order; index k-2 maps a (k-1)-token context to
    /// its successor counts.
    tables: Vec<HashMap<Vec<u32>, SuccessorTable>>,
    /// Most frequent unigram (smallest id on ties) — the best continuation
    /// among tokens never seen after the current context.
    top_unigram: u32,
}

impl BackoffNGramOracle {
    pub fn train(sequences: &[Vec<String>], order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidOrder);
        }
        if sequences.iter().all(|s| s.is_empty()) {
            return Err(Error::EmptyCorpus);
        }

        // ids assigned in sorted token order; 0 is reserved for <unk>
        let types: BTreeSet<&str> = sequences
            .iter()
            .flatten()
            .map(String::as_str)
            .filter(|t| *t != UNK_TOKEN)
            .collect();
        let mut vocab = vec![UNK_TOKEN.to_string()];
        vocab.extend(types.into_iter().map(str::to_string));
        let ids: HashMap<String, u32> = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();

        let mut unigram: HashMap<u32, u64> = HashMap::new();
        let mut unigram_total = 0u64;
        let mut tables = vec![HashMap::<Vec<u32>, SuccessorTable>::new(); order.saturating_sub(1)];
        for seq in sequences {
            let toks: Vec<u32> = seq.iter().map(|t| ids[t.as_str()]).collect();
            for (i, &w) in toks.iter().enumerate() {
                *unigram.entry(w).or_insert(0) += 1;
                unigram_total += 1;
                for k in 2..=order {
                    if i + 1 >= k {
                        let ctx = toks[i + 1 - k..i].to_vec();
                        let tab = tables[k - 2].entry(ctx).or_default();
                        tab.total += 1;
                        *tab.succ.entry(w).or_insert(0) += 1;
                    }
                }
            }
        }

        let top_unigram = (0..vocab.len() as u32)
            .max_by_key(|id| (unigram.get(id).copied().unwrap_or(0), std::cmp::Reverse(*id)))
            .unwrap_or(UNK);

        Ok(Self {
            order,
            vocab,
            ids,
            unigram,
            unigram_total,
            tables,
            top_unigram,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn token_id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        self.vocab
            .get(id as usize)
            .map(String::as_str)
            .unwrap_or(UNK_TOKEN)
    }

    fn prob_order(&self, k: usize, ctx: &[u32], w: u32) -> f64 {
        if k <= 1 {
            let t = self.unigram_total as f64;
            let c = self.unigram.get(&w).copied().unwrap_or(0) as f64;
            let distinct = self.unigram.len() as f64;
            let uniform = 1.0 / self.vocab.len() as f64;
            return (c - DISCOUNT).max(0.0) / t + (DISCOUNT * distinct / t) * uniform;
        }
        if ctx.len() < k - 1 {
            return self.prob_order(k - 1, ctx, w);
        }
        let h = &ctx[ctx.len() - (k - 1)..];
        match self.tables[k - 2].get(h) {
            None => self.prob_order(k - 1, ctx, w),
            Some(tab) => {
                let c = tab.total as f64;
                let cw = tab.succ.get(&w).copied().unwrap_or(0) as f64;
                let distinct = tab.succ.len() as f64;
                (cw - DISCOUNT).max(0.0) / c
                    + (DISCOUNT * distinct / c) * self.prob_order(k - 1, ctx, w)
            }
        }
    }

    /// P(w | context) at the full model order.
    pub fn prob(&self, ctx: &[u32], w: u32) -> f64 {
        self.prob_order(self.order, ctx, w)
    }

    /// Best next token id. Any token outside every observed successor set
    /// of the context's backoff chain gets the same backoff factor times
    /// its unigram probability, so the only such token that can win is the
    /// most frequent unigram; restricting the argmax to observed successors
    /// plus that token is exact.
    pub fn best_next(&self, ctx: &[u32]) -> u32 {
        let mut candidates: BTreeSet<u32> = BTreeSet::new();
        for k in 2..=self.order {
            if ctx.len() >= k - 1 {
                if let Some(tab) = self.tables[k - 2].get(&ctx[ctx.len() - (k - 1)..]) {
                    candidates.extend(tab.succ.keys().copied());
                }
            }
        }
        candidates.insert(self.top_unigram);
        let mut best = UNK;
        let mut best_p = f64::NEG_INFINITY;
        for w in candidates {
            let p = self.prob(ctx, w);
            if p > best_p {
                best_p = p;
                best = w;
            }
        }
        best
    }
}

impl GenerationOracle for BackoffNGramOracle {
    fn greedy_continue(&self, context: &[String], max_new: usize) -> Result<Vec<String>> {
        let mut ctx: Vec<u32> = context.iter().map(|t| self.token_id(t)).collect();
        let mut out = Vec::with_capacity(max_new);
        for _ in 0..max_new {
            let next = self.best_next(&ctx);
            out.push(self.token(next).to_string());
            ctx.push(next);
        }
        Ok(out)
    }

    fn logprob(&self, context: &[String], continuation: &[String]) -> Result<f64> {
        let mut ctx: Vec<u32> = context.iter().map(|t| self.token_id(t)).collect();
        let mut sum = 0.0;
        for t in continuation {
            let w = self.token_id(t);
            sum += self.prob(&ctx, w).ln();
            ctx.push(w);
        }
        Ok(sum)
    }
}

/// Train the built-in oracle from documents under the run tokenizer.
pub fn train_ngram_oracle(
    docs: &[Document],
    tokenizer: &Tokenizer,
    order: usize,
) -> Result<BackoffNGramOracle> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let sequences: Vec<Vec<String>> = docs
        .iter()
        .map(|d| {
            tokenizer
                .tokenize(&d.text)
                .into_iter()
                .map(str::to_string)
                .collect()
        })
        .collect();
    BackoffNGramOracle::train(&sequences, order)
}
