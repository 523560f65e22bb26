//! End-to-end tests of the `curator` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use curator::oracle::{GenerationOracle, SubprocessOracle};

fn curator() -> Command {
    Command::new(env!("CARGO_BIN_EXE_curator"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary should spawn");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

fn gen_sample(dir: &Path, size_mb: usize) -> Vec<PathBuf> {
    run_ok(
        curator()
            .arg("gen-sample")
            .arg("--output-dir")
            .arg(dir)
            .args(["--seed", "7", "--size-mb"])
            .arg(size_mb.to_string()),
    );
    (0..4).map(|k| dir.join(format!("shard_{k}.jsonl"))).collect()
}

#[test]
fn stage_chain_via_cli() {
    let dir = tempfile::tempdir().unwrap();
    let shards = gen_sample(&dir.path().join("sample"), 2);

    let deduped = dir.path().join("deduped.jsonl");
    let out = run_ok(
        curator()
            .arg("dedup-exact")
            .arg("--input")
            .args(&shards)
            .arg("--output")
            .arg(&deduped),
    );
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.contains("dedup-exact:"), "unexpected stdout: {line}");
    assert!(deduped.exists());
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("deduped.jsonl.manifest.json")).unwrap(),
    )
    .unwrap();
    let input = manifest["input_count"].as_u64().unwrap();
    let kept = manifest["kept_count"].as_u64().unwrap();
    let dropped = manifest["dropped_count"].as_u64().unwrap();
    assert_eq!(kept + dropped, input);
    assert!(dropped > 0, "sample corpus plants exact duplicates");

    let decon = dir.path().join("decontaminated.jsonl");
    run_ok(
        curator()
            .arg("decontaminate")
            .arg("--input")
            .arg(&deduped)
            .arg("--output")
            .arg(&decon)
            .arg("--eval")
            .arg(dir.path().join("sample/eval.jsonl")),
    );
    let stats = run_ok(
        curator()
            .arg("stats")
            .arg("--input")
            .arg(&decon)
            .arg("--manifest")
            .arg(dir.path().join("decontaminated.jsonl.manifest.json")),
    );
    let table = String::from_utf8(stats.stdout).unwrap();
    assert!(table.contains("common_crawl"), "stats table missing group:\n{table}");
}

#[test]
fn malformed_line_handling() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.jsonl");
    std::fs::write(
        &input,
        concat!(
            r#"{"id":"a","source":"books","text":"你好世界"}"#,
            "\nnot json at all\n",
            r#"{"id":"b","source":"books","text":"再见世界"}"#,
            "\n",
        ),
    )
    .unwrap();

    // default: malformed input is a hard error (exit 1)
    let strictly = curator()
        .arg("ingest")
        .arg("--input")
        .arg(&input)
        .arg("--output")
        .arg(dir.path().join("out1.jsonl"))
        .output()
        .unwrap();
    assert_eq!(strictly.status.code(), Some(1), "{strictly:?}");

    // --skip-malformed: succeeds partially with exit 3
    let skipping = curator()
        .arg("ingest")
        .arg("--input")
        .arg(&input)
        .arg("--output")
        .arg(dir.path().join("out2.jsonl"))
        .arg("--skip-malformed")
        .output()
        .unwrap();
    assert_eq!(skipping.status.code(), Some(3), "{skipping:?}");
    let kept = std::fs::read_to_string(dir.path().join("out2.jsonl")).unwrap();
    assert_eq!(kept.lines().count(), 2);
}

#[test]
fn pipeline_run_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let shards = gen_sample(&dir.path().join("sample"), 2);
    let out_dir = dir.path().join("out");
    let config = dir.path().join("pipeline.toml");
    let inputs: Vec<String> = shards
        .iter()
        .map(|p| format!("{:?}", p.display().to_string()))
        .collect();
    std::fs::write(
        &config,
        format!(
            r#"
seed = 7
inputs = [{}]
output_dir = {:?}

[[stages]]
kind = "language"

[[stages]]
kind = "dedup_exact"

[[stages]]
kind = "dedup_near"
"#,
            inputs.join(", "),
            out_dir.display().to_string(),
        ),
    )
    .unwrap();
    run_ok(curator().arg("run").arg("--config").arg(&config));
    for name in [
        "01_language.jsonl",
        "02_dedup_exact.jsonl",
        "03_dedup_near.jsonl",
        "report.txt",
        "run_summary.json",
    ] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("run_summary.json")).unwrap())
            .unwrap();
    assert!(summary["final_count"].as_u64().unwrap() > 0);
}

#[test]
fn served_oracle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    // "甲乙" repeated: after any "甲" the oracle must continue "乙甲乙…"
    let text = "甲乙".repeat(40);
    std::fs::write(
        &corpus,
        format!(r#"{{"id":"a","source":"books","text":"{text}"}}"#) + "\n",
    )
    .unwrap();
    let vocab_path = dir.path().join("vocab.txt");

    let mut cmd = Command::new(env!("CARGO_BIN_EXE_curator"));
    cmd.arg("oracle-serve")
        .arg("--corpus")
        .arg(&corpus)
        .args(["--order", "3"])
        .arg("--vocab-out")
        .arg(&vocab_path);
    // the server writes the vocab before reading stdin, but spawn needs it
    // up front; run once to produce it
    run_ok(Command::new(env!("CARGO_BIN_EXE_curator"))
        .arg("oracle-serve")
        .arg("--corpus")
        .arg(&corpus)
        .args(["--order", "3"])
        .arg("--vocab-out")
        .arg(&vocab_path)
        .stdin(std::process::Stdio::null()));
    let vocab: Vec<String> = std::fs::read_to_string(&vocab_path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert!(vocab.contains(&"甲".to_string()));

    let oracle = SubprocessOracle::spawn(&mut cmd, vocab).unwrap();
    let ctx = vec!["甲".to_string()];
    let tokens = oracle.greedy_continue(&ctx, 3).unwrap();
    assert_eq!(tokens, vec!["乙", "甲", "乙"]);
    let lp = oracle
        .logprob(&ctx, &["乙".to_string(), "甲".to_string()])
        .unwrap();
    assert!(lp.is_finite() && lp < 0.0);
}
