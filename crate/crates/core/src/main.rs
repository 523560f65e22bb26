//! Command-line front end.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime error, 3 partial
//! (some input lines were skipped under --skip-malformed).

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use curator::decontam::OverlapSemantics;
use curator::io::{read_corpus, write_records, MalformedPolicy, ReadOptions};
use curator::mixture::DIMENSION_SOURCE;
use curator::oracle::{
    count_occurrences, perplexity_classify, probe_memorization, serve_oracle, train_ngram_oracle,
    ProbeConfig, ProbeDoc, Split,
};
use curator::pipeline::{run_pipeline, run_stage, PipelineConfig, StageConfig, TokenizerConfig};
use curator::prompt::{
    read_examples, build_packed_stream, PackingConfig, PromptBank, PromptExample,
    DEFAULT_CONTEXT_WINDOW, DEFAULT_TASK_CAP,
};
use curator::quality::{train_quality_model, QualityConfig, RuleSet};
use curator::sample::{generate_sample, read_quality_examples};
use curator::stats::corpus_stats;
use curator::{dedup::exact_key, hash::fingerprint_hex, Document, Error, Result, StageManifest};

#[derive(Parser)]
#[command(name = "curator", version, about = "Corpus curation and prompt-data toolkit")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores). Never
    /// affects outputs.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageIo {
    /// Input shard files; shard index = position in this list.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,

    #[arg(long)]
    output: PathBuf,

    /// Manifest path (default: <output>.manifest.json).
    #[arg(long)]
    manifest: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Reject records carrying fields outside the grammar.
    #[arg(long)]
    strict: bool,

    /// Skip malformed lines instead of aborting (exit 3 when any skipped).
    #[arg(long)]
    skip_malformed: bool,
}

impl StageIo {
    fn read_opts(&self) -> ReadOptions {
        ReadOptions {
            policy: if self.skip_malformed {
                MalformedPolicy::Skip
            } else {
                MalformedPolicy::Abort
            },
            strict: self.strict,
        }
    }

    fn manifest_path(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| {
            let mut p = self.output.clone().into_os_string();
            p.push(".manifest.json");
            PathBuf::from(p)
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate and canonicalize record files.
    Ingest {
        #[command(flatten)]
        io: StageIo,
    },
    /// Apply rule-based filters.
    FilterRules {
        #[command(flatten)]
        io: StageIo,
        /// TOML file overriding the default rule set.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Train the binary quality classifier from labeled examples.
    QualityTrain {
        /// JSONL file of {"text", "label": "positive"|"negative"}.
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Keep only documents the classifier scores above its threshold.
    QualityApply {
        #[command(flatten)]
        io: StageIo,
        #[arg(long)]
        model: PathBuf,
    },
    /// Remove exact duplicates (md5 over normalized text).
    DedupExact {
        #[command(flatten)]
        io: StageIo,
    },
    /// Remove near duplicates (simhash within a Hamming radius).
    DedupNear {
        #[command(flatten)]
        io: StageIo,
        #[arg(long, default_value_t = 3)]
        radius: u32,
        #[arg(long, default_value_t = 4)]
        bands: usize,
    },
    /// Remove documents overlapping a held-out eval set.
    Decontaminate {
        #[command(flatten)]
        io: StageIo,
        #[arg(long, required = true, num_args = 1..)]
        eval: Vec<PathBuf>,
        #[arg(long, default_value_t = 17)]
        ngram: usize,
        /// "overlapping" (strict, default) or "disjoint".
        #[arg(long, default_value = "overlapping")]
        semantics: String,
    },
    /// Re-sample the corpus toward target group proportions.
    Balance {
        #[command(flatten)]
        io: StageIo,
        /// Repeated group=proportion pairs; proportions must sum to 1.
        #[arg(long = "target", required = true, value_parser = parse_target)]
        targets: Vec<(String, f64)>,
        #[arg(long)]
        budget: u64,
        #[arg(long, default_value = DIMENSION_SOURCE)]
        dimension: String,
    },
    /// Per-group corpus statistics, optionally joined with manifests.
    Stats {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long, num_args = 0..)]
        manifest: Vec<PathBuf>,
        #[arg(long, default_value = DIMENSION_SOURCE)]
        dimension: String,
        #[arg(long)]
        strict: bool,
    },
    /// Build fixed-window packed multitask samples.
    Pack {
        /// Prompt bank: JSONL of templates.
        #[arg(long)]
        bank: PathBuf,
        /// Prompt examples: JSONL of {"task", "fields", "label"}.
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_CONTEXT_WINDOW)]
        context_window: usize,
        #[arg(long, default_value_t = DEFAULT_TASK_CAP)]
        task_cap: usize,
        /// Sample examples without replacement (epoch-wise).
        #[arg(long)]
        without_replacement: bool,
    },
    /// Probe a built-in oracle for training-data memorization.
    Probe {
        /// Oracle training corpus.
        #[arg(long, required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        /// Held-out documents never shown to the oracle.
        #[arg(long, required = true, num_args = 1..)]
        held_out: Vec<PathBuf>,
        #[arg(long, default_value_t = 5)]
        order: usize,
        #[arg(long, default_value_t = 50)]
        prefix: usize,
        #[arg(long, default_value_t = 22)]
        generate: usize,
        #[arg(long = "match", default_value_t = 22)]
        match_threshold: usize,
        /// Max probed documents per split, drawn evenly across sources.
        #[arg(long, default_value_t = 1000)]
        per_split: usize,
        /// Write the full JSON report here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Classify a prompt by per-label perplexity.
    Score {
        /// Corpus used to train the built-in oracle.
        #[arg(long, required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long, default_value_t = 5)]
        order: usize,
        #[arg(long)]
        prompt: String,
        /// JSON object mapping labels to verbalizer strings.
        #[arg(long)]
        verbalizer: String,
    },
    /// Run a full declarative pipeline.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve the built-in oracle over stdin/stdout (line-delimited JSON).
    OracleServe {
        #[arg(long, required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long, default_value_t = 5)]
        order: usize,
        /// Write the shared vocabulary (one token per line, line = id).
        #[arg(long)]
        vocab_out: Option<PathBuf>,
    },
    /// Generate a deterministic synthetic sample corpus.
    GenSample {
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        size_mb: usize,
    },
}

fn parse_target(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected group=proportion, got {s:?}"))?;
    let value: f64 = value
        .parse()
        .map_err(|e| format!("bad proportion in {s:?}: {e}"))?;
    Ok((name.to_string(), value))
}

fn io_err(path: &std::path::Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Stable digest of a standalone stage invocation, stamped into manifests.
fn stage_fingerprint(stage: &StageConfig, io: &StageIo) -> String {
    let material = serde_json::json!({
        "stage": stage,
        "inputs": io.input,
        "seed": io.seed,
        "strict": io.strict,
    });
    fingerprint_hex(material.to_string().as_bytes())
}

fn run_single_stage(stage: StageConfig, io: &StageIo) -> Result<u8> {
    let tokenizer = TokenizerConfig::default().build()?;
    let fingerprint = stage_fingerprint(&stage, io);
    let (docs, skipped) = read_corpus(&io.input, io.read_opts())?;
    let out_dir = io
        .output
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    let (kept, manifest) = run_stage(
        &stage,
        docs,
        &tokenizer,
        &fingerprint,
        io.seed,
        io.read_opts(),
        &out_dir,
    )?;
    write_records(&io.output, &kept)?;
    manifest.save(io.manifest_path())?;
    println!(
        "{}: {} in, {} kept, {} dropped",
        manifest.stage, manifest.input_count, manifest.kept_count, manifest.dropped_count
    );
    Ok(if skipped > 0 { 3 } else { 0 })
}

fn run_command(command: Command) -> Result<u8> {
    match command {
        Command::Ingest { io } => {
            let (docs, skipped) = read_corpus(&io.input, io.read_opts())?;
            write_records(&io.output, &docs)?;
            println!("ingested {} records ({} skipped)", docs.len(), skipped);
            Ok(if skipped > 0 { 3 } else { 0 })
        }
        Command::FilterRules { io, rules } => {
            let rules = match rules {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
                    toml::from_str(&text).map_err(|e| Error::Config(format!("rules: {e}")))?
                }
                None => RuleSet::default(),
            };
            run_single_stage(StageConfig::Rules { rules }, &io)
        }
        Command::QualityTrain {
            examples,
            model_out,
            seed,
        } => {
            let examples = read_quality_examples(&examples)?;
            let config = QualityConfig {
                seed,
                ..QualityConfig::default()
            };
            let model = train_quality_model(&examples, &config)?;
            model.save(&model_out)?;
            println!("trained on {} examples -> {}", examples.len(), model_out.display());
            Ok(0)
        }
        Command::QualityApply { io, model } => {
            run_single_stage(StageConfig::Quality { model_path: model }, &io)
        }
        Command::DedupExact { io } => run_single_stage(StageConfig::DedupExact {}, &io),
        Command::DedupNear { io, radius, bands } => {
            run_single_stage(StageConfig::DedupNear { radius, bands }, &io)
        }
        Command::Decontaminate {
            io,
            eval,
            ngram,
            semantics,
        } => {
            let semantics = match semantics.as_str() {
                "overlapping" => OverlapSemantics::Overlapping,
                "disjoint" => OverlapSemantics::Disjoint,
                other => {
                    return Err(Error::Config(format!(
                        "semantics must be \"overlapping\" or \"disjoint\", got {other:?}"
                    )))
                }
            };
            run_single_stage(
                StageConfig::Decontaminate {
                    eval_paths: eval,
                    ngram,
                    semantics,
                },
                &io,
            )
        }
        Command::Balance {
            io,
            targets,
            budget,
            dimension,
        } => run_single_stage(
            StageConfig::Balance {
                targets: targets.into_iter().collect(),
                token_budget: budget,
                dimension,
            },
            &io,
        ),
        Command::Stats {
            input,
            manifest,
            dimension,
            strict,
        } => {
            let opts = ReadOptions {
                policy: MalformedPolicy::Abort,
                strict,
            };
            let (docs, _) = read_corpus(&input, opts)?;
            let manifests = manifest
                .iter()
                .map(StageManifest::load)
                .collect::<Result<Vec<_>>>()?;
            let tokenizer = TokenizerConfig::default().build()?;
            let stats = corpus_stats(&docs, &dimension, &tokenizer, &manifests)?;
            print!("{}", stats.render_table());
            Ok(0)
        }
        Command::Pack {
            bank,
            examples,
            output,
            samples,
            seed,
            context_window,
            task_cap,
            without_replacement,
        } => {
            let bank = PromptBank::load(&bank)?;
            let examples = read_examples(&examples)?;
            let mut pools: BTreeMap<String, Vec<PromptExample>> = BTreeMap::new();
            for e in examples {
                pools.entry(e.task.clone()).or_default().push(e);
            }
            let tokenizer = TokenizerConfig {
                preserve_whitespace: true,
                ..TokenizerConfig::default()
            }
            .build()?;
            let config = PackingConfig {
                context_window,
                task_cap,
                with_replacement: !without_replacement,
                ..PackingConfig::default()
            };
            let packed = build_packed_stream(pools, &bank, &tokenizer, config, seed, samples)?;
            let mut w = BufWriter::new(std::fs::File::create(&output).map_err(io_err(&output))?);
            for sample in &packed {
                writeln!(w, "{}", serde_json::to_string(sample)?).map_err(io_err(&output))?;
            }
            w.flush().map_err(io_err(&output))?;
            println!("packed {} samples -> {}", packed.len(), output.display());
            Ok(0)
        }
        Command::Probe {
            corpus,
            held_out,
            order,
            prefix,
            generate,
            match_threshold,
            per_split,
            output,
        } => {
            let opts = ReadOptions::default();
            let (train_docs, _) = read_corpus(&corpus, opts)?;
            let (held_docs, _) = read_corpus(&held_out, opts)?;
            let tokenizer = TokenizerConfig::default().build()?;
            let oracle = train_ngram_oracle(&train_docs, &tokenizer, order)?;
            let occurrences = count_occurrences(&train_docs);
            let occ_of = |doc: &Document| {
                exact_key(doc)
                    .ok()
                    .and_then(|k| occurrences.get(&k.hex()).copied())
                    .unwrap_or(0)
            };
            let mut probe_docs = Vec::new();
            for (docs, split) in [(&train_docs, Split::Train), (&held_docs, Split::HeldOut)] {
                for doc in even_subset(docs, per_split) {
                    probe_docs.push(ProbeDoc {
                        occurrence_count: occ_of(doc),
                        doc: doc.clone(),
                        split,
                    });
                }
            }
            let config = ProbeConfig {
                prefix,
                generate,
                match_threshold,
            };
            let report = probe_memorization(&oracle, &probe_docs, &tokenizer, config)?;
            for (split, bucket) in &report.success_by_split {
                println!(
                    "{split}: {}/{} memorized ({:.1}%)",
                    bucket.successes,
                    bucket.probed,
                    bucket.rate() * 100.0
                );
            }
            println!("skipped (too short): {}", report.skipped_too_short);
            if let Some(path) = output {
                std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
                    .map_err(io_err(&path))?;
            }
            Ok(0)
        }
        Command::Score {
            corpus,
            order,
            prompt,
            verbalizer,
        } => {
            let verbalizer: BTreeMap<String, String> = serde_json::from_str(&verbalizer)?;
            let (docs, _) = read_corpus(&corpus, ReadOptions::default())?;
            let tokenizer = TokenizerConfig::default().build()?;
            let oracle = train_ngram_oracle(&docs, &tokenizer, order)?;
            let result = perplexity_classify(&oracle, &prompt, &verbalizer, &tokenizer)?;
            for (label, ppl) in &result.scores {
                println!("{label}: perplexity {ppl:.4}");
            }
            println!("prediction: {}", result.label);
            Ok(0)
        }
        Command::Run { config } => {
            let config = PipelineConfig::load(&config)?;
            let summary = run_pipeline(&config)?;
            for s in &summary.stages {
                println!(
                    "{}: {} in, {} kept, {} dropped",
                    s.stage, s.input_count, s.kept_count, s.dropped_count
                );
            }
            println!(
                "final: {} documents, {} tokens (fingerprint {})",
                summary.final_count, summary.final_tokens, summary.config_fingerprint
            );
            Ok(if summary.skipped_malformed > 0 { 3 } else { 0 })
        }
        Command::OracleServe {
            corpus,
            order,
            vocab_out,
        } => {
            let (docs, _) = read_corpus(&corpus, ReadOptions::default())?;
            let tokenizer = TokenizerConfig::default().build()?;
            let oracle = train_ngram_oracle(&docs, &tokenizer, order)?;
            if let Some(path) = vocab_out {
                let mut text = oracle.vocab().join("\n");
                text.push('\n');
                std::fs::write(&path, text).map_err(io_err(&path))?;
            }
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            serve_oracle(&oracle, stdin.lock(), stdout.lock())?;
            Ok(0)
        }
        Command::GenSample {
            output_dir,
            seed,
            size_mb,
        } => {
            let paths = generate_sample(&output_dir, seed, size_mb)?;
            for p in &paths.shards {
                println!("shard: {}", p.display());
            }
            println!("eval: {}", paths.eval.display());
            println!("quality examples: {}", paths.quality_examples.display());
            Ok(0)
        }
    }
}

/// Up to `limit` documents drawn evenly across sources, preserving order.
fn even_subset(docs: &[Document], limit: usize) -> Vec<&Document> {
    let mut by_source: BTreeMap<&str, Vec<&Document>> = BTreeMap::new();
    for doc in docs {
        by_source.entry(doc.source.as_str()).or_default().push(doc);
    }
    let mut out = Vec::new();
    let mut round = 0;
    while out.len() < limit {
        let mut any = false;
        for docs in by_source.values() {
            if let Some(doc) = docs.get(round) {
                out.push(*doc);
                any = true;
                if out.len() == limit {
                    break;
                }
            }
        }
        if !any {
            break;
        }
        round += 1;
    }
    out
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Json(_) | Error::Subprocess(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            eprintln!("error: cannot configure {workers} workers: {e}");
            return ExitCode::from(1);
        }
    }
    match run_command(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
