//! Deterministic sample-corpus generator.
//!
//! Produces a synthetic mixed-quality corpus with known planted artifacts —
//! exact and near duplicates, non-Chinese pages, noise, and spans copied
//! from a held-out eval set — so that end-to-end pipeline runs have
//! verifiable ground truth at any size. Same (seed, size) → byte-identical
//! files.

use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::doc::Document;
use crate::error::Result;
use crate::io::write_records;
use crate::quality::QualityExample;

pub const DEFAULT_SHARDS: usize = 4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplePaths {
    pub shards: Vec<PathBuf>,
    pub eval: PathBuf,
    pub quality_examples: PathBuf,
}

const SOURCES: [(&str, u32); 5] = [
    ("common_crawl", 50),
    ("books", 25),
    ("news", 12),
    ("forums", 8),
    ("academic", 5),
];

fn alphabet() -> Vec<char> {
    (0x4E00..0x4E00 + 2000u32)
        .filter_map(char::from_u32)
        .collect()
}

fn pick_source(rng: &mut ChaCha20Rng) -> &'static str {
    let total: u32 = SOURCES.iter().map(|(_, w)| w).sum();
    let mut roll = rng.random_range(0..total);
    for (name, w) in SOURCES {
        if roll < w {
            return name;
        }
        roll -= w;
    }
    unreachable!()
}

/// A few lines of clean "prose": ideograph runs ending in a period.
fn prose(rng: &mut ChaCha20Rng, alphabet: &[char]) -> String {
    let lines = rng.random_range(4..9);
    let mut text = String::new();
    for _ in 0..lines {
        let len = rng.random_range(20..60);
        for _ in 0..len {
            text.push(alphabet[rng.random_range(0..alphabet.len())]);
        }
        text.push('。');
        text.push('\n');
    }
    text
}

fn english(rng: &mut ChaCha20Rng) -> String {
    const WORDS: [&str; 8] = [
        "the", "quick", "brown", "fox", "jumps", "over", "lazy", "dogs",
    ];
    let mut text = String::new();
    for _ in 0..3 {
        for _ in 0..rng.random_range(15..30) {
            text.push_str(WORDS[rng.random_range(0..WORDS.len())]);
            text.push(' ');
        }
        text.push_str(".\n");
    }
    text
}

fn noise(rng: &mut ChaCha20Rng) -> String {
    let mut text = String::new();
    for _ in 0..rng.random_range(100..200) {
        text.push(['{', '}', ';', '<', '>', '=', '&', '|'][rng.random_range(0..8)]);
    }
    text
}

/// Replace one ideograph near the middle, yielding a near duplicate.
fn edit_one_char(text: &str, alphabet: &[char], rng: &mut ChaCha20Rng) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = chars.clone();
    let idx = chars.len() / 2;
    let mut replacement = alphabet[rng.random_range(0..alphabet.len())];
    while replacement == chars[idx] {
        replacement = alphabet[rng.random_range(0..alphabet.len())];
    }
    out[idx] = replacement;
    out.into_iter().collect()
}

/// Generate a corpus of roughly `size_mb` megabytes split over
/// [`DEFAULT_SHARDS`] shard files, plus an eval set and labeled quality
/// examples.
pub fn generate_sample(dir: impl AsRef<Path>, seed: u64, size_mb: usize) -> Result<SamplePaths> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| crate::error::Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let alphabet = alphabet();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    // Held-out eval docs; some corpus docs embed spans copied from them.
    let eval_docs: Vec<Document> = (0..200)
        .map(|i| {
            Document::new(
                format!("eval{i}"),
                "custom:eval",
                prose(&mut rng, &alphabet),
            )
        })
        .collect();
    let eval = dir.join("eval.jsonl");
    write_records(&eval, &eval_docs)?;

    // Labeled quality examples: clean prose vs noise.
    let mut examples: Vec<QualityExample> = Vec::with_capacity(400);
    for _ in 0..200 {
        examples.push(QualityExample::new(prose(&mut rng, &alphabet), true));
    }
    for _ in 0..200 {
        examples.push(QualityExample::new(noise(&mut rng), false));
    }
    let quality_examples = dir.join("quality_examples.jsonl");
    {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(&quality_examples).map_err(
            |source| crate::error::Error::Io {
                path: quality_examples.clone(),
                source,
            },
        )?);
        for e in &examples {
            writeln!(w, "{}", serde_json::to_string(e)?).map_err(|source| {
                crate::error::Error::Io {
                    path: quality_examples.clone(),
                    source,
                }
            })?;
        }
    }

    let target_bytes = size_mb * 1024 * 1024;
    let per_shard = target_bytes / DEFAULT_SHARDS;
    let mut shards = Vec::new();
    let mut recent: Vec<String> = Vec::new();
    let mut doc_no = 0usize;
    for shard in 0..DEFAULT_SHARDS {
        let mut docs = Vec::new();
        let mut bytes = 0usize;
        while bytes < per_shard {
            let source = pick_source(&mut rng);
            let roll: f64 = rng.random();
            let text = if roll < 0.010 {
                english(&mut rng)
            } else if roll < 0.015 {
                noise(&mut rng)
            } else if roll < 0.025 && !recent.is_empty() {
                // exact duplicate of an earlier clean doc
                recent[rng.random_range(0..recent.len())].clone()
            } else if roll < 0.035 && !recent.is_empty() {
                let base = recent[rng.random_range(0..recent.len())].clone();
                edit_one_char(&base, &alphabet, &mut rng)
            } else if roll < 0.040 {
                // contaminated: embed a 40-token span from an eval doc
                let eval_text: Vec<char> = eval_docs
                    [rng.random_range(0..eval_docs.len())]
                .text
                .chars()
                .filter(|c| !c.is_whitespace())
                .collect();
                let start = rng.random_range(0..eval_text.len().saturating_sub(41).max(1));
                let span: String = eval_text[start..start + 40].iter().collect();
                let mut text = prose(&mut rng, &alphabet);
                text.push_str(&span);
                text.push('。');
                text.push('\n');
                text.push_str(&prose(&mut rng, &alphabet));
                text
            } else {
                let text = prose(&mut rng, &alphabet);
                if recent.len() < 256 {
                    recent.push(text.clone());
                }
                text
            };
            bytes += text.len() + 64;
            docs.push(Document::new(format!("doc{doc_no}"), source, text));
            doc_no += 1;
        }
        let path = dir.join(format!("shard_{shard}.jsonl"));
        write_records(&path, &docs)?;
        shards.push(path);
    }

    Ok(SamplePaths {
        shards,
        eval,
        quality_examples,
    })
}

/// Read quality examples from a line-delimited JSON file.
pub fn read_quality_examples(path: impl AsRef<Path>) -> Result<Vec<QualityExample>> {
    use std::io::BufRead;
    let path = path.as_ref();
    let io_err = |source| crate::error::Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{read_corpus, ReadOptions};

    #[test]
    fn generation_is_deterministic_and_sized() {
        let dir = tempfile::tempdir().unwrap();
        let a = generate_sample(dir.path().join("a"), 11, 1).unwrap();
        let b = generate_sample(dir.path().join("b"), 11, 1).unwrap();
        assert_eq!(a.shards.len(), DEFAULT_SHARDS);
        let mut total = 0;
        for (pa, pb) in a.shards.iter().zip(&b.shards) {
            let ba = std::fs::read(pa).unwrap();
            assert_eq!(ba, std::fs::read(pb).unwrap());
            total += ba.len();
        }
        let want = 1024 * 1024;
        assert!(total > want * 9 / 10 && total < want * 12 / 10, "{total}");
        assert_eq!(
            std::fs::read(&a.eval).unwrap(),
            std::fs::read(&b.eval).unwrap()
        );
    }

    #[test]
    fn generated_records_parse_under_strict_mode() {
        let dir = tempfile::tempdir().unwrap();
        let paths = generate_sample(dir.path(), 3, 1).unwrap();
        let opts = ReadOptions {
            strict: true,
            ..ReadOptions::default()
        };
        let (docs, skipped) = read_corpus(&paths.shards, opts).unwrap();
        assert_eq!(skipped, 0);
        assert!(docs.len() > 100);
        let examples = read_quality_examples(&paths.quality_examples).unwrap();
        assert_eq!(examples.len(), 400);
    }
}
