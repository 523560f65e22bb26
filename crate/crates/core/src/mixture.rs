//! Re-sampling weights that make the emitted training stream match target
//! per-group token proportions.
//!
//! Each group gets an epoch multiplier m_g = target_g * T / available_g.
//! Every document is emitted floor(m_g) times plus once more with
//! probability frac(m_g), decided by a counter-based hash of
//! (seed, document id), so shards can be sampled independently and
//! concatenated in canonical order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::doc::Document;
use crate::error::{Error, Result};
use crate::hash::{hash64_seeded, unit_fraction};
use crate::tokenize::Tokenizer;

pub const DIMENSION_SOURCE: &str = "source";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub target: f64,
    pub available_tokens: u64,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    /// `source` or any meta key.
    pub dimension: String,
    pub token_budget: u64,
    pub groups: BTreeMap<String, GroupSpec>,
}

impl MixtureSpec {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("mixture spec serialization: {e}")))?;
        fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("mixture spec: {e}")))
    }
}

/// Resolve a document's group along the spec's dimension.
pub fn group_of<'a>(doc: &'a Document, dimension: &str) -> Result<&'a str> {
    if dimension == DIMENSION_SOURCE {
        return Ok(&doc.source);
    }
    doc.meta
        .get(dimension)
        .map(String::as_str)
        .ok_or_else(|| Error::UnresolvableGroup {
            id: doc.id.clone(),
            dimension: dimension.to_string(),
        })
}

pub fn compute_mixture(
    available: &BTreeMap<String, u64>,
    target: &BTreeMap<String, f64>,
    token_budget: u64,
    dimension: &str,
) -> Result<MixtureSpec> {
    let sum: f64 = target.values().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::TargetsNotNormalized(sum));
    }
    if let Some(t) = target.values().find(|&&t| t < 0.0) {
        return Err(Error::Config(format!("negative target {t}")));
    }
    let mut groups = BTreeMap::new();
    for (group, &t) in target {
        let avail = available.get(group).copied().unwrap_or(0);
        if t > 0.0 && avail == 0 {
            return Err(Error::ZeroAvailability(group.clone()));
        }
        let multiplier = if t == 0.0 {
            0.0
        } else {
            t * token_budget as f64 / avail as f64
        };
        if !multiplier.is_finite() || multiplier < 0.0 {
            return Err(Error::Config(format!(
                "non-finite multiplier for group \"{group}\""
            )));
        }
        groups.insert(
            group.clone(),
            GroupSpec {
                target: t,
                available_tokens: avail,
                multiplier,
            },
        );
    }
    Ok(MixtureSpec {
        dimension: dimension.to_string(),
        token_budget,
        groups,
    })
}

const SAMPLE_SEED_TAG: u64 = 0x5a5a_0bad_cafe_f00d;

/// Number of copies of `doc_id` to emit for multiplier `m` under `seed`.
/// Pure function, so shards can be sampled independently.
pub fn copies_for(doc_id: &str, multiplier: f64, seed: u64) -> u64 {
    let whole = multiplier.floor() as u64;
    let frac = multiplier.fract();
    let h = hash64_seeded(doc_id.as_bytes(), seed ^ SAMPLE_SEED_TAG);
    whole + u64::from(unit_fraction(h) < frac)
}

/// Emit each document `copies_for` times in canonical order, stopping once
/// the token budget is reached. Copies of one document stay adjacent; their
/// ids get a `#k` suffix so the output ids remain unique.
pub fn sample_stream(
    docs: &[Document],
    spec: &MixtureSpec,
    seed: u64,
    budget_tokens: u64,
    tokenizer: &Tokenizer,
) -> Result<Vec<Document>> {
    let mut out = Vec::new();
    let mut emitted_tokens = 0u64;
    if budget_tokens == 0 {
        return Ok(out);
    }
    'outer: for doc in docs {
        let group = group_of(doc, &spec.dimension)?;
        let m = spec
            .groups
            .get(group)
            .map(|g| g.multiplier)
            .unwrap_or(0.0);
        let copies = copies_for(&doc.id, m, seed);
        if copies == 0 {
            continue;
        }
        let tokens = tokenizer.count(&doc.text) as u64;
        for k in 0..copies {
            let mut copy = doc.clone();
            if k > 0 {
                copy.id = format!("{}#{k}", doc.id);
            }
            out.push(copy);
            emitted_tokens += tokens;
            if emitted_tokens >= budget_tokens {
                break 'outer;
            }
        }
    }
    Ok(out)
}

/// Realized per-group token proportions of a stream.
pub fn realized_proportions(
    docs: &[Document],
    dimension: &str,
    tokenizer: &Tokenizer,
) -> Result<BTreeMap<String, f64>> {
    let mut tokens: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0u64;
    for doc in docs {
        let group = group_of(doc, dimension)?.to_string();
        let t = tokenizer.count(&doc.text) as u64;
        *tokens.entry(group).or_default() += t;
        total += t;
    }
    Ok(tokens
        .into_iter()
        .map(|(g, t)| (g, if total == 0 { 0.0 } else { t as f64 / total as f64 }))
        .collect())
}
