//! Declarative multi-stage runs: read a TOML config, execute stages in
//! order, materialize each stage's output and manifest, and join everything
//! into a run summary. Same (config, inputs, seed) → byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decontam::{
    build_eval_index, check_document, OverlapSemantics, DEFAULT_NGRAM, REASON_CONTAMINATED,
};
use crate::dedup::{exact_dedup, near_dedup, simhash_signature, BandedIndex};
use crate::doc::Document;
use crate::error::{Error, Result};
use crate::hash::fingerprint_hex;
use crate::io::{read_corpus, write_records, MalformedPolicy, ReadOptions};
use crate::lang::{detect_language, DEFAULT_CJK_THRESHOLD};
use crate::manifest::{ManifestBuilder, StageManifest};
use crate::mixture::{compute_mixture, group_of, sample_stream, DIMENSION_SOURCE};
use crate::quality::{apply_rules, QualityModel, RuleSet, RuleVerdict};
use crate::stats::corpus_stats;
use crate::tokenize::Tokenizer;

pub const REASON_NON_CHINESE: &str = "non_chinese";
pub const REASON_INDETERMINATE: &str = "indeterminate_language";
pub const REASON_LOW_QUALITY: &str = "low_quality";
pub const REASON_NEAR_DUPLICATE: &str = "near_duplicate";
pub const REASON_NOT_SAMPLED: &str = "not_sampled";

fn default_threshold() -> f64 {
    DEFAULT_CJK_THRESHOLD
}

fn default_radius() -> u32 {
    3
}

fn default_bands() -> usize {
    4
}

fn default_ngram() -> usize {
    DEFAULT_NGRAM
}

fn default_dimension() -> String {
    DIMENSION_SOURCE.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StageConfig {
    Language {
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    Rules {
        #[serde(default)]
        rules: RuleSet,
    },
    Quality {
        model_path: PathBuf,
    },
    DedupExact {},
    DedupNear {
        #[serde(default = "default_radius")]
        radius: u32,
        #[serde(default = "default_bands")]
        bands: usize,
    },
    Decontaminate {
        eval_paths: Vec<PathBuf>,
        #[serde(default = "default_ngram")]
        ngram: usize,
        #[serde(default)]
        semantics: OverlapSemantics,
    },
    Balance {
        targets: BTreeMap<String, f64>,
        token_budget: u64,
        #[serde(default = "default_dimension")]
        dimension: String,
    },
}

impl StageConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            StageConfig::Language { .. } => "language",
            StageConfig::Rules { .. } => "rules",
            StageConfig::Quality { .. } => "quality",
            StageConfig::DedupExact {} => "dedup_exact",
            StageConfig::DedupNear { .. } => "dedup_near",
            StageConfig::Decontaminate { .. } => "decontaminate",
            StageConfig::Balance { .. } => "balance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub struct TokenizerConfig {
    #[serde(default = "TokenizerConfig::default_kind")]
    pub kind: String,
    #[serde(default)]
    pub preserve_whitespace: bool,
    #[serde(default)]
    pub vocab_path: Option<PathBuf>,
}

impl TokenizerConfig {
    fn default_kind() -> String {
        "mixed_script".to_string()
    }

    pub fn build(&self) -> Result<Tokenizer> {
        match self.kind.as_str() {
            "mixed_script" => Ok(Tokenizer::mixed_script(self.preserve_whitespace)),
            "vocab" => {
                let path = self.vocab_path.as_ref().ok_or_else(|| {
                    Error::Config("tokenizer kind \"vocab\" requires vocab_path".into())
                })?;
                Tokenizer::from_vocab_file(path, self.preserve_whitespace)
            }
            other => Err(Error::Config(format!("unknown tokenizer kind {other:?}"))),
        }
    }
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            kind: Self::default_kind(),
            preserve_whitespace: false,
            vocab_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub skip_malformed: bool,
    #[serde(default)]
    pub tokenizer: TokenizerConfig,
    pub stages: Vec<StageConfig>,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Stable digest of the canonical serialization; stamped into every
    /// manifest so mixed-run joins are caught. The output directory is not
    /// part of the identity: the same computation written elsewhere must
    /// produce byte-identical artifacts.
    pub fn fingerprint(&self) -> String {
        let mut identity = self.clone();
        identity.output_dir = PathBuf::new();
        let canonical =
            serde_json::to_string(&identity).expect("config serialization cannot fail");
        fingerprint_hex(canonical.as_bytes())
    }

    /// Reject bad configs before anything is read or written.
    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Config("no input files".into()));
        }
        for path in &self.inputs {
            if !path.is_file() {
                return Err(Error::Config(format!("input {} not found", path.display())));
            }
        }
        self.tokenizer.build()?;
        for stage in &self.stages {
            match stage {
                StageConfig::Language { threshold } => {
                    if !(0.0..=1.0).contains(threshold) {
                        return Err(Error::Config(format!(
                            "language threshold {threshold} outside [0, 1]"
                        )));
                    }
                }
                StageConfig::Quality { model_path } => {
                    if !model_path.is_file() {
                        return Err(Error::Config(format!(
                            "quality model {} not found",
                            model_path.display()
                        )));
                    }
                }
                StageConfig::DedupNear { radius, bands } => {
                    BandedIndex::new(*bands, *radius)?;
                }
                StageConfig::Decontaminate {
                    eval_paths, ngram, ..
                } => {
                    if *ngram < 1 {
                        return Err(Error::InvalidOrder);
                    }
                    for path in eval_paths {
                        if !path.is_file() {
                            return Err(Error::Config(format!(
                                "eval file {} not found",
                                path.display()
                            )));
                        }
                    }
                }
                StageConfig::Balance { targets, .. } => {
                    let sum: f64 = targets.values().sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::TargetsNotNormalized(sum));
                    }
                }
                StageConfig::Rules { .. } | StageConfig::DedupExact {} => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub input_count: u64,
    pub kept_count: u64,
    pub dropped_count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_fingerprint: String,
    pub seed: u64,
    pub input_count: u64,
    pub skipped_malformed: u64,
    pub final_count: u64,
    pub final_tokens: u64,
    pub stages: Vec<StageSummary>,
}

fn stage_paths(output_dir: &Path, index: usize, kind: &str) -> (PathBuf, PathBuf) {
    let base = format!("{index:02}_{kind}");
    (
        output_dir.join(format!("{base}.jsonl")),
        output_dir.join(format!("{base}.manifest.json")),
    )
}

/// Split a corpus by per-document keep/drop verdicts computed in parallel.
fn partition(
    docs: Vec<Document>,
    tokenizer: &Tokenizer,
    stage: &str,
    fingerprint: &str,
    seed: u64,
    verdict: impl Fn(&Document) -> Option<&'static str> + Sync,
) -> Result<(Vec<Document>, StageManifest)> {
    let verdicts: Vec<Option<&'static str>> = docs.par_iter().map(&verdict).collect();
    let mut builder = ManifestBuilder::new(stage, fingerprint, seed);
    let mut kept = Vec::with_capacity(docs.len());
    for (doc, verdict) in docs.into_iter().zip(verdicts) {
        let tokens = tokenizer.count(&doc.text) as u64;
        match verdict {
            None => {
                builder.keep(&doc, tokens);
                kept.push(doc);
            }
            Some(reason) => builder.drop(&doc, tokens, reason),
        }
    }
    Ok((kept, builder.finish()?))
}

/// Execute one stage against an in-memory corpus. `output_dir` is only
/// used by stages that emit side artifacts (balance writes mixture.toml).
pub fn run_stage(
    stage: &StageConfig,
    docs: Vec<Document>,
    tokenizer: &Tokenizer,
    fingerprint: &str,
    seed: u64,
    read_opts: ReadOptions,
    output_dir: &Path,
) -> Result<(Vec<Document>, StageManifest)> {
    let kind = stage.kind();
    match stage {
        StageConfig::Language { threshold } => {
            let threshold = *threshold;
            partition(docs, tokenizer, kind, fingerprint, seed, |doc| {
                match detect_language(&doc.text, threshold) {
                    Ok(r) if r.tag == "zh" => None,
                    Ok(_) => Some(REASON_NON_CHINESE),
                    Err(_) => Some(REASON_INDETERMINATE),
                }
            })
        }
        StageConfig::Rules { rules } => {
            partition(docs, tokenizer, kind, fingerprint, seed, |doc| {
                match apply_rules(doc, rules, tokenizer) {
                    RuleVerdict::Keep => None,
                    RuleVerdict::Reject(reason) => Some(reason.as_str()),
                }
            })
        }
        StageConfig::Quality { model_path } => {
            let model = QualityModel::load(model_path)?;
            partition(docs, tokenizer, kind, fingerprint, seed, |doc| {
                let (_, keep) = crate::quality::score_quality(&model, &doc.text);
                (!keep).then_some(REASON_LOW_QUALITY)
            })
        }
        StageConfig::DedupExact {} => exact_dedup(&docs, tokenizer, fingerprint, seed),
        StageConfig::DedupNear { radius, bands } => {
            // Documents too short to carry a signature cannot be compared
            // and are kept.
            let sigs: Vec<_> = docs
                .par_iter()
                .filter_map(|d| simhash_signature(d).ok())
                .collect();
            let result = near_dedup(&sigs, *radius, *bands)?;
            let removed_ids: std::collections::HashSet<&str> = result
                .removed
                .iter()
                .map(|&i| sigs[i].id.as_str())
                .collect();
            partition(docs, tokenizer, kind, fingerprint, seed, move |doc| {
                removed_ids
                    .contains(doc.id.as_str())
                    .then_some(REASON_NEAR_DUPLICATE)
            })
        }
        StageConfig::Decontaminate {
            eval_paths,
            ngram,
            semantics,
        } => {
            let (eval_docs, _) = read_corpus(eval_paths, read_opts)?;
            let index = build_eval_index(&eval_docs, *ngram, tokenizer)?;
            let semantics = *semantics;
            partition(docs, tokenizer, kind, fingerprint, seed, move |doc| {
                check_document(doc, &index, tokenizer, semantics)
                    .is_remove()
                    .then_some(REASON_CONTAMINATED)
            })
        }
        StageConfig::Balance {
            targets,
            token_budget,
            dimension,
        } => {
            let mut available: BTreeMap<String, u64> = BTreeMap::new();
            for doc in &docs {
                let group = group_of(doc, dimension)?.to_string();
                *available.entry(group).or_insert(0) += tokenizer.count(&doc.text) as u64;
            }
            let spec = compute_mixture(&available, targets, *token_budget, dimension)?;
            spec.save(output_dir.join("mixture.toml"))?;
            let sampled = sample_stream(&docs, &spec, seed, *token_budget, tokenizer)?;

            // Manifest accounts input documents: kept = emitted at least
            // once, so conservation still holds even though the output
            // stream carries duplicates.
            let emitted: std::collections::HashSet<&str> = sampled
                .iter()
                .map(|d| d.id.split('#').next().unwrap_or(&d.id))
                .collect();
            let mut builder = ManifestBuilder::new(kind, fingerprint, seed);
            for doc in &docs {
                let tokens = tokenizer.count(&doc.text) as u64;
                if emitted.contains(doc.id.as_str()) {
                    builder.keep(doc, tokens);
                } else {
                    builder.drop(doc, tokens, REASON_NOT_SAMPLED);
                }
            }
            Ok((sampled, builder.finish()?))
        }
    }
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<RunSummary> {
    config.validate()?;
    let tokenizer = config.tokenizer.build()?;
    let fingerprint = config.fingerprint();
    let read_opts = ReadOptions {
        policy: if config.skip_malformed {
            MalformedPolicy::Skip
        } else {
            MalformedPolicy::Abort
        },
        strict: config.strict,
    };

    fs::create_dir_all(&config.output_dir).map_err(|source| Error::Io {
        path: config.output_dir.clone(),
        source,
    })?;

    let (mut docs, skipped) = read_corpus(&config.inputs, read_opts)?;
    let input_count = docs.len() as u64;

    let mut manifests = Vec::new();
    let mut stages = Vec::new();
    for (i, stage) in config.stages.iter().enumerate() {
        let (out_path, manifest_path) = stage_paths(&config.output_dir, i + 1, stage.kind());
        let (kept, manifest) = run_stage(
            stage,
            docs,
            &tokenizer,
            &fingerprint,
            config.seed,
            read_opts,
            &config.output_dir,
        )?;
        write_records(&out_path, &kept)?;
        manifest.save(&manifest_path)?;
        stages.push(StageSummary {
            stage: format!("{:02}_{}", i + 1, stage.kind()),
            input_count: manifest.input_count,
            kept_count: manifest.kept_count,
            dropped_count: manifest.dropped_count,
        });
        manifests.push(manifest);
        docs = kept;
    }

    let summary = RunSummary {
        config_fingerprint: fingerprint.clone(),
        seed: config.seed,
        input_count,
        skipped_malformed: skipped,
        final_count: docs.len() as u64,
        final_tokens: docs.iter().map(|d| tokenizer.count(&d.text) as u64).sum(),
        stages,
    };

    // Joined Table-style report over the final corpus. The balance stage may
    // emit duplicates; stats are over the materialized stream as-is.
    let report = corpus_stats(&docs, DIMENSION_SOURCE, &tokenizer, &manifests)?;
    fs::write(
        config.output_dir.join("report.txt"),
        report.render_table(),
    )
    .map_err(|source| Error::Io {
        path: config.output_dir.join("report.txt"),
        source,
    })?;
    fs::write(
        config.output_dir.join("run_summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )
    .map_err(|source| Error::Io {
        path: config.output_dir.join("run_summary.json"),
        source,
    })?;
    Ok(summary)
}
