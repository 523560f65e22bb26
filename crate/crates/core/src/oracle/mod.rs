//! Generation-oracle contract plus the built-in backoff n-gram stand-in,
//! the memorization probe and the perplexity-argmin classifier.

mod classify;
mod ngram;
mod probe;
mod subprocess;

pub use classify::{perplexity_classify, Classification};
pub use ngram::{train_ngram_oracle, BackoffNGramOracle, DISCOUNT};
pub use probe::{
    count_occurrences, probe_memorization, ProbeConfig, ProbeDoc, ProbeReport, ProbeResult, Split,
};
pub use subprocess::{serve_oracle, OracleRequest, OracleResponse, SubprocessOracle, PROTOCOL_VERSION};

use crate::error::Result;

/// A model that can extend a token sequence and score continuations.
///
/// Contract: `greedy_continue` is deterministic, and `logprob` is additive
/// over continuation splits — `logprob(c, a⊕b) = logprob(c, a) +
/// logprob(c⊕a, b)`.
pub trait GenerationOracle: Sync {
    fn greedy_continue(&self, context: &[String], max_new: usize) -> Result<Vec<String>>;

    /// Sum of per-token natural-log probabilities of `continuation` given
    /// `context`.
    fn logprob(&self, context: &[String], continuation: &[String]) -> Result<f64>;
}
