//! Hashed character-n-gram logistic classifier.
//!
//! Features are counts of character n-grams (default orders 2..4) hashed
//! into `bucket_count` buckets. Training is epoch-ordered stochastic
//! gradient descent on the logistic loss: examples are visited in input
//! order every epoch, so given the same inputs the model is bit-reproducible.
//!
//! Model file layout (little-endian):
//!   magic "QMODEL01" | u32 n_orders | u32 order * n_orders | u64 bucket_count
//!   | u64 seed | f64 bias | f64 keep_threshold | u64 nnz
//!   | (u64 bucket, f64 weight) * nnz

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::{hash64_seeded, QUALITY_FEATURE_SEED};

const MAGIC: &[u8; 8] = b"QMODEL01";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QualityExample {
    pub text: String,
    pub label: Label,
}

impl QualityExample {
    pub fn new(text: impl Into<String>, positive: bool) -> Self {
        Self {
            text: text.into(),
            label: if positive { Label::Positive } else { Label::Negative },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QualityConfig {
    pub orders: Vec<usize>,
    pub bucket_count: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub keep_threshold: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            orders: vec![2, 3, 4],
            bucket_count: 1 << 20,
            epochs: 8,
            learning_rate: 0.1,
            seed: 0,
            keep_threshold: 0.9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QualityModel {
    pub orders: Vec<usize>,
    pub bucket_count: u64,
    pub seed: u64,
    pub keep_threshold: f64,
    pub bias: f64,
    weights: HashMap<u64, f64>,
}

/// Sparse bucket->count features for one text.
pub(crate) fn features(text: &str, orders: &[usize], bucket_count: u64) -> BTreeMap<u64, f64> {
    let chars: Vec<char> = text.chars().collect();
    let mut counts = BTreeMap::new();
    let mut buf = String::new();
    for &order in orders {
        if chars.len() < order {
            continue;
        }
        for window in chars.windows(order) {
            buf.clear();
            buf.extend(window.iter());
            let bucket =
                hash64_seeded(buf.as_bytes(), QUALITY_FEATURE_SEED ^ order as u64) % bucket_count;
            *counts.entry(bucket).or_insert(0.0) += 1.0;
        }
    }
    counts
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn train_quality_model(
    examples: &[QualityExample],
    config: &QualityConfig,
) -> Result<QualityModel> {
    if examples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let has_pos = examples.iter().any(|e| e.label == Label::Positive);
    let has_neg = examples.iter().any(|e| e.label == Label::Negative);
    if !has_pos {
        return Err(Error::SingleClass("negative".into()));
    }
    if !has_neg {
        return Err(Error::SingleClass("positive".into()));
    }

    // Feature extraction is the expensive part; do it once up front.
    let feats: Vec<(BTreeMap<u64, f64>, f64)> = examples
        .iter()
        .map(|e| {
            let y = if e.label == Label::Positive { 1.0 } else { 0.0 };
            (features(&e.text, &config.orders, config.bucket_count), y)
        })
        .collect();

    let mut weights: HashMap<u64, f64> = HashMap::new();
    let mut bias = 0.0;
    for _epoch in 0..config.epochs {
        for (x, y) in &feats {
            let mut z = bias;
            for (bucket, count) in x {
                z += weights.get(bucket).copied().unwrap_or(0.0) * count;
            }
            let err = y - sigmoid(z);
            bias += config.learning_rate * err;
            for (bucket, count) in x {
                *weights.entry(*bucket).or_insert(0.0) += config.learning_rate * err * count;
            }
        }
    }
    weights.retain(|_, w| *w != 0.0);

    Ok(QualityModel {
        orders: config.orders.clone(),
        bucket_count: config.bucket_count,
        seed: config.seed,
        keep_threshold: config.keep_threshold,
        bias,
        weights,
    })
}

/// Probability that `text` is clean, plus the keep decision (strict `>` at
/// the threshold).
pub fn score_quality(model: &QualityModel, text: &str) -> (f64, bool) {
    let p = model.score(text);
    (p, p > model.keep_threshold)
}

impl QualityModel {
    pub fn score(&self, text: &str) -> f64 {
        let x = features(text, &self.orders, self.bucket_count);
        let mut z = self.bias;
        for (bucket, count) in &x {
            z += self.weights.get(bucket).copied().unwrap_or(0.0) * count;
        }
        sigmoid(z)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(io_err);
        write(MAGIC)?;
        write(&(self.orders.len() as u32).to_le_bytes())?;
        for &o in &self.orders {
            write(&(o as u32).to_le_bytes())?;
        }
        write(&self.bucket_count.to_le_bytes())?;
        write(&self.seed.to_le_bytes())?;
        write(&self.bias.to_le_bytes())?;
        write(&self.keep_threshold.to_le_bytes())?;
        write(&(self.weights.len() as u64).to_le_bytes())?;
        let mut entries: Vec<_> = self.weights.iter().collect();
        entries.sort_by_key(|(bucket, _)| **bucket);
        for (bucket, weight) in entries {
            write(&bucket.to_le_bytes())?;
            write(&weight.to_le_bytes())?;
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let bad = |reason: &str| Error::BadFormat {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut r = BufReader::new(File::open(path).map_err(io_err)?);
        let mut buf8 = [0u8; 8];
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf8).map_err(io_err)?;
        if &buf8 != MAGIC {
            return Err(bad("bad magic"));
        }
        r.read_exact(&mut buf4).map_err(io_err)?;
        let n_orders = u32::from_le_bytes(buf4) as usize;
        if n_orders > 16 {
            return Err(bad("implausible order count"));
        }
        let mut orders = Vec::with_capacity(n_orders);
        for _ in 0..n_orders {
            r.read_exact(&mut buf4).map_err(io_err)?;
            orders.push(u32::from_le_bytes(buf4) as usize);
        }
        let read_u64 = |r: &mut BufReader<File>| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(io_err)?;
            Ok(u64::from_le_bytes(b))
        };
        let bucket_count = read_u64(&mut r)?;
        let seed = read_u64(&mut r)?;
        let bias = f64::from_bits(read_u64(&mut r)?);
        let keep_threshold = f64::from_bits(read_u64(&mut r)?);
        let nnz = read_u64(&mut r)?;
        let mut weights = HashMap::with_capacity(nnz as usize);
        for _ in 0..nnz {
            let bucket = read_u64(&mut r)?;
            let weight = f64::from_bits(read_u64(&mut r)?);
            weights.insert(bucket, weight);
        }
        Ok(Self {
            orders,
            bucket_count,
            seed,
            keep_threshold,
            bias,
            weights,
        })
    }

    #[cfg(test)]
    pub(crate) fn set_weight_for_test(&mut self, bucket: u64, weight: f64) {
        self.weights.insert(bucket, weight);
    }
}
