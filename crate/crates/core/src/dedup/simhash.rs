//! 64-bit simhash fingerprints over character 3-grams of normalized text.
//!
//! Signature file format (little-endian, fixed-width header per record):
//!   u32 shard | u64 record | u64 fingerprint | u32 id_len | id bytes

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dedup::exact::normalize;
use crate::doc::{Document, OrderKey};
use crate::error::{Error, Result};
use crate::hash::{hash64_seeded, SIMHASH_FEATURE_SEED};

const SHINGLE_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimHashSignature {
    pub fingerprint: u64,
    pub id: String,
    pub order_key: OrderKey,
}

impl SimHashSignature {
    pub fn hamming(&self, other: &Self) -> u32 {
        (self.fingerprint ^ other.fingerprint).count_ones()
    }
}

/// Simhash of a weighted feature multiset: bit i of the fingerprint is 1 iff
/// the weighted sum of ±1 contributions from bit i of each feature hash is
/// strictly positive.
pub fn simhash_from_features<I>(features: I) -> u64
where
    I: IntoIterator<Item = (u64, i64)>,
{
    let mut acc = [0i64; 64];
    for (h, weight) in features {
        for (i, slot) in acc.iter_mut().enumerate() {
            if (h >> i) & 1 == 1 {
                *slot += weight;
            } else {
                *slot -= weight;
            }
        }
    }
    let mut out = 0u64;
    for (i, slot) in acc.iter().enumerate() {
        if *slot > 0 {
            out |= 1 << i;
        }
    }
    out
}

/// Character 3-gram multiset of the normalized text, weight = occurrence
/// count. Hashes are seeded so the fingerprint is stable across runs.
pub fn shingle_features(text: &str) -> HashMap<u64, i64> {
    let normalized = normalize(text);
    let chars: Vec<char> = normalized.chars().collect();
    let mut counts = HashMap::new();
    if chars.len() < SHINGLE_ORDER {
        return counts;
    }
    let mut buf = String::new();
    for window in chars.windows(SHINGLE_ORDER) {
        buf.clear();
        buf.extend(window.iter());
        let h = hash64_seeded(buf.as_bytes(), SIMHASH_FEATURE_SEED);
        *counts.entry(h).or_insert(0) += 1;
    }
    counts
}

pub fn simhash_signature(doc: &Document) -> Result<SimHashSignature> {
    let features = shingle_features(&doc.text);
    if features.is_empty() {
        return Err(Error::NoFeatures);
    }
    Ok(SimHashSignature {
        fingerprint: simhash_from_features(features),
        id: doc.id.clone(),
        order_key: doc.order_key,
    })
}

pub fn write_signatures(path: impl AsRef<Path>, sigs: &[SimHashSignature]) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for sig in sigs {
        w.write_all(&sig.order_key.shard.to_le_bytes()).map_err(io_err)?;
        w.write_all(&sig.order_key.record.to_le_bytes()).map_err(io_err)?;
        w.write_all(&sig.fingerprint.to_le_bytes()).map_err(io_err)?;
        w.write_all(&(sig.id.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(sig.id.as_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_signatures(path: impl AsRef<Path>) -> Result<Vec<SimHashSignature>> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut r = BufReader::new(File::open(path).map_err(io_err)?);
    let mut sigs = Vec::new();
    loop {
        let mut b4 = [0u8; 4];
        match r.read_exact(&mut b4) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(io_err(e)),
        }
        let shard = u32::from_le_bytes(b4);
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(io_err)?;
        let record = u64::from_le_bytes(b8);
        r.read_exact(&mut b8).map_err(io_err)?;
        let fingerprint = u64::from_le_bytes(b8);
        r.read_exact(&mut b4).map_err(io_err)?;
        let id_len = u32::from_le_bytes(b4) as usize;
        let mut id_bytes = vec![0u8; id_len];
        r.read_exact(&mut id_bytes).map_err(io_err)?;
        let id = String::from_utf8(id_bytes).map_err(|_| Error::BadFormat {
            path: path.to_path_buf(),
            reason: "signature id is not UTF-8".into(),
        })?;
        sigs.push(SimHashSignature {
            fingerprint,
            id,
            order_key: OrderKey::new(shard, record),
        });
    }
    Ok(sigs)
}
