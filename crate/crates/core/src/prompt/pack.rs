//! Build fixed-window multitask training samples.
//!
//! Each sample is assembled by repeatedly (1) sampling a task uniformly,
//! (2) sampling an example from the task's capped pool, (3) sampling one of
//! the task's templates, (4) rendering, and (5) appending the rendered text
//! plus a separator until the context window is reached. An item that would
//! overflow is deferred to start the next sample; an item that alone exceeds
//! the window is tail-truncated and flagged.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::bank::{render_prompt, PromptBank, PromptExample};
use crate::tokenize::Tokenizer;

pub const DEFAULT_CONTEXT_WINDOW: usize = 2048;
pub const DEFAULT_TASK_CAP: usize = 50_000;

/// Cap a task's pool at `cap` examples: passthrough when small enough, else
/// a uniform random subset (original order preserved), deterministic in the
/// seed.
pub fn cap_task(examples: Vec<PromptExample>, cap: usize, seed: u64) -> Vec<PromptExample> {
    if examples.len() <= cap {
        return examples;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..examples.len()).collect();
    let (selected, _) = indices.partial_shuffle(&mut rng, cap);
    let mut selected = selected.to_vec();
    selected.sort_unstable();
    let mut keep: Vec<Option<PromptExample>> = examples.into_iter().map(Some).collect();
    selected
        .into_iter()
        .map(|i| keep[i].take().expect("indices are distinct"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedSegment {
    pub task: String,
    pub template_id: String,
    pub text: String,
    pub token_start: usize,
    pub token_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedSample {
    pub segments: Vec<PackedSegment>,
    pub total_tokens: usize,
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct PackingConfig {
    pub context_window: usize,
    /// Appended after every rendered item.
    pub separator: String,
    pub task_cap: usize,
    /// Step (2): sample examples with replacement (default) or epoch-wise
    /// without.
    pub with_replacement: bool,
}

impl Default for PackingConfig {
    fn default() -> Self {
        Self {
            context_window: DEFAULT_CONTEXT_WINDOW,
            separator: "\n".to_string(),
            task_cap: DEFAULT_TASK_CAP,
            with_replacement: true,
        }
    }
}

struct RenderedItem {
    task: String,
    template_id: String,
    text: String,
    tokens: usize,
}

/// Deterministic packed-sample generator: (seed, bank, pools) fixes the
/// byte-exact output stream.
pub struct Packer<'a> {
    bank: &'a PromptBank,
    tokenizer: &'a Tokenizer,
    config: PackingConfig,
    tasks: Vec<String>,
    pools: BTreeMap<String, Vec<PromptExample>>,
    // without-replacement state: per-task queue of remaining indices
    queues: BTreeMap<String, Vec<usize>>,
    rng: ChaCha20Rng,
    pending: Option<RenderedItem>,
}

impl<'a> Packer<'a> {
    pub fn new(
        pools: BTreeMap<String, Vec<PromptExample>>,
        bank: &'a PromptBank,
        tokenizer: &'a Tokenizer,
        config: PackingConfig,
        seed: u64,
    ) -> Result<Self> {
        if bank.is_empty() {
            return Err(Error::BankInvalid("empty prompt bank".into()));
        }
        let mut capped = BTreeMap::new();
        for (task, examples) in pools {
            if examples.is_empty() {
                return Err(Error::EmptyTask(task, "examples"));
            }
            if bank.templates_for(&task).is_empty() {
                return Err(Error::EmptyTask(task, "templates"));
            }
            let task_seed = seed ^ crate::hash::hash64(task.as_bytes());
            capped.insert(task, cap_task(examples, config.task_cap, task_seed));
        }
        if capped.is_empty() {
            return Err(Error::BankInvalid("no tasks to pack".into()));
        }
        let tasks: Vec<String> = capped.keys().cloned().collect();
        Ok(Self {
            bank,
            tokenizer,
            config,
            tasks,
            pools: capped,
            queues: BTreeMap::new(),
            rng: ChaCha20Rng::seed_from_u64(seed),
            pending: None,
        })
    }

    fn next_example_index(&mut self, task: &str) -> usize {
        let pool_len = self.pools[task].len();
        if self.config.with_replacement {
            return self.rng.random_range(0..pool_len);
        }
        let queue = self.queues.entry(task.to_string()).or_default();
        if queue.is_empty() {
            *queue = (0..pool_len).collect();
            queue.shuffle(&mut self.rng);
        }
        queue.pop().expect("refilled above")
    }

    fn render_next(&mut self) -> Result<RenderedItem> {
        let task = self.tasks[self.rng.random_range(0..self.tasks.len())].clone();
        let example_idx = self.next_example_index(&task);
        let templates = self.bank.templates_for(&task);
        let template = templates[self.rng.random_range(0..templates.len())];
        let rendered = render_prompt(template, &self.pools[&task][example_idx])?;
        let text = format!("{rendered}{}", self.config.separator);
        let tokens = self.tokenizer.count(&text);
        Ok(RenderedItem {
            task,
            template_id: template.template_id.clone(),
            text,
            tokens,
        })
    }

    /// Produce the next packed sample.
    pub fn next_sample(&mut self) -> Result<PackedSample> {
        let ctx = self.config.context_window;
        let mut segments = Vec::new();
        let mut total = 0usize;
        loop {
            let item = match self.pending.take() {
                Some(item) => item,
                None => self.render_next()?,
            };
            if total + item.tokens > ctx {
                if segments.is_empty() {
                    // Oversized singleton: keep exactly ctx tokens.
                    let toks = self.tokenizer.tokenize(&item.text);
                    let text: String = toks[..ctx].concat();
                    return Ok(PackedSample {
                        segments: vec![PackedSegment {
                            task: item.task,
                            template_id: item.template_id,
                            text,
                            token_start: 0,
                            token_len: ctx,
                        }],
                        total_tokens: ctx,
                        truncated: true,
                    });
                }
                self.pending = Some(item);
                return Ok(PackedSample {
                    segments,
                    total_tokens: total,
                    truncated: false,
                });
            }
            let len = item.tokens;
            segments.push(PackedSegment {
                task: item.task,
                template_id: item.template_id,
                text: item.text,
                token_start: total,
                token_len: len,
            });
            total += len;
            if total == ctx {
                return Ok(PackedSample {
                    segments,
                    total_tokens: total,
                    truncated: false,
                });
            }
        }
    }
}

/// Convenience wrapper: build `n_samples` packed samples.
pub fn build_packed_stream(
    pools: BTreeMap<String, Vec<PromptExample>>,
    bank: &PromptBank,
    tokenizer: &Tokenizer,
    config: PackingConfig,
    seed: u64,
    n_samples: usize,
) -> Result<Vec<PackedSample>> {
    let mut packer = Packer::new(pools, bank, tokenizer, config, seed)?;
    (0..n_samples).map(|_| packer.next_sample()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::bank::PromptTemplate;

    fn tok() -> Tokenizer {
        Tokenizer::mixed_script(true)
    }

    fn template(task: &str, pattern: &str) -> PromptTemplate {
        PromptTemplate {
            task: task.into(),
            category: "misc".into(),
            template_id: "t0".into(),
            pattern: pattern.into(),
            verbalizer: BTreeMap::new(),
        }
    }

    fn example(task: &str, value: &str) -> PromptExample {
        PromptExample {
            task: task.into(),
            fields: [("x".to_string(), value.to_string())].into(),
            label: None,
        }
    }

    #[test]
    fn samples_never_exceed_the_window() {
        let bank = PromptBank::from_templates(vec![
            template("a", "任务甲：{x}"),
            template("b", "任务乙：{x}"),
        ])
        .unwrap();
        let pools: BTreeMap<String, Vec<PromptExample>> = [
            (
                "a".to_string(),
                (0..20).map(|i| example("a", &"字".repeat(50 + i))).collect(),
            ),
            (
                "b".to_string(),
                (0..20).map(|i| example("b", &"词".repeat(30 + i))).collect(),
            ),
        ]
        .into();
        let t = tok();
        let samples =
            build_packed_stream(pools, &bank, &t, PackingConfig::default(), 1, 200).unwrap();
        for s in &samples {
            assert!(s.total_tokens <= DEFAULT_CONTEXT_WINDOW);
            assert_eq!(
                s.total_tokens,
                s.segments.iter().map(|seg| seg.token_len).sum::<usize>()
            );
            // spans tile the sample exactly
            let mut cursor = 0;
            for seg in &s.segments {
                assert_eq!(seg.token_start, cursor);
                cursor += seg.token_len;
            }
        }
    }

    #[test]
    fn oversized_singleton_is_truncated_to_exactly_the_window() {
        let bank = PromptBank::from_templates(vec![template("a", "{x}")]).unwrap();
        let pools: BTreeMap<String, Vec<PromptExample>> =
            [("a".to_string(), vec![example("a", &"长".repeat(3000))])].into();
        let t = tok();
        let samples =
            build_packed_stream(pools, &bank, &t, PackingConfig::default(), 0, 3).unwrap();
        for s in samples {
            assert!(s.truncated);
            assert_eq!(s.total_tokens, DEFAULT_CONTEXT_WINDOW);
            assert_eq!(s.segments.len(), 1);
        }
    }

    #[test]
    fn items_of_half_window_pack_exactly_two_per_sample() {
        // 1023 rendered tokens + 1 separator token = 1024 per item.
        let bank = PromptBank::from_templates(vec![template("a", "{x}")]).unwrap();
        let pools: BTreeMap<String, Vec<PromptExample>> =
            [("a".to_string(), vec![example("a", &"字".repeat(1023))])].into();
        let t = tok();
        let samples =
            build_packed_stream(pools, &bank, &t, PackingConfig::default(), 0, 10).unwrap();
        for s in samples {
            assert_eq!(s.segments.len(), 2);
            assert_eq!(s.total_tokens, 2048);
            assert!(!s.truncated);
        }
    }

    #[test]
    fn cap_keeps_exactly_cap_examples() {
        let examples: Vec<_> = (0..60_000)
            .map(|i| example("a", &format!("v{i}")))
            .collect();
        let capped = cap_task(examples, 50_000, 7);
        assert_eq!(capped.len(), 50_000);
        // distinct examples
        let distinct: std::collections::HashSet<_> =
            capped.iter().map(|e| e.fields["x"].clone()).collect();
        assert_eq!(distinct.len(), 50_000);
    }

    #[test]
    fn small_pool_passes_through() {
        let examples: Vec<_> = (0..10).map(|i| example("a", &format!("v{i}"))).collect();
        assert_eq!(cap_task(examples.clone(), 50_000, 0), examples);
    }

    #[test]
    fn cap_is_deterministic_in_seed() {
        let examples: Vec<_> = (0..1000).map(|i| example("a", &format!("v{i}"))).collect();
        assert_eq!(
            cap_task(examples.clone(), 100, 42),
            cap_task(examples.clone(), 100, 42)
        );
        assert_ne!(
            cap_task(examples.clone(), 100, 42),
            cap_task(examples, 100, 43)
        );
    }

    #[test]
    fn packing_is_deterministic() {
        let bank = PromptBank::from_templates(vec![template("a", "条目：{x}")]).unwrap();
        let pools: BTreeMap<String, Vec<PromptExample>> = [(
            "a".to_string(),
            (0..50).map(|i| example("a", &"内".repeat(40 + i))).collect(),
        )]
        .into();
        let t = tok();
        let a = build_packed_stream(pools.clone(), &bank, &t, PackingConfig::default(), 5, 20)
            .unwrap();
        let b =
            build_packed_stream(pools, &bank, &t, PackingConfig::default(), 5, 20).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn excluded_tasks_never_leak_into_output() {
        let bank = PromptBank::from_templates(vec![
            template("kept", "普通任务：{x}"),
            template("held_out", "保留任务：{x}"),
        ])
        .unwrap();
        let marker = "绝密保留标记串";
        let pools: BTreeMap<String, Vec<PromptExample>> = [(
            "kept".to_string(),
            (0..10).map(|i| example("kept", &"字".repeat(64 + i))).collect(),
        )]
        .into();
        // held_out's examples (containing the marker) are simply not pooled
        let t = tok();
        let samples =
            build_packed_stream(pools, &bank, &t, PackingConfig::default(), 3, 50).unwrap();
        for s in samples {
            for seg in s.segments {
                assert!(!seg.text.contains(marker));
                assert_eq!(seg.task, "kept");
            }
        }
    }

    #[test]
    fn empty_bank_and_empty_task_error() {
        let t = tok();
        assert!(Packer::new(
            BTreeMap::new(),
            &PromptBank::from_templates(vec![template("a", "{x}")]).unwrap(),
            &t,
            PackingConfig::default(),
            0
        )
        .is_err());
        let pools: BTreeMap<String, Vec<PromptExample>> =
            [("a".to_string(), vec![])].into();
        assert!(matches!(
            Packer::new(
                pools,
                &PromptBank::from_templates(vec![template("a", "{x}")]).unwrap(),
                &t,
                PackingConfig::default(),
                0
            ),
            Err(Error::EmptyTask(..))
        ));
    }

    #[test]
    fn without_replacement_covers_the_pool_each_epoch() {
        let bank = PromptBank::from_templates(vec![template("a", "{x}")]).unwrap();
        let pools: BTreeMap<String, Vec<PromptExample>> = [(
            "a".to_string(),
            (0..8).map(|i| example("a", &format!("唯一样本{i}"))).collect(),
        )]
        .into();
        let t = tok();
        let config = PackingConfig {
            with_replacement: false,
            context_window: 64,
            ..PackingConfig::default()
        };
        let mut packer = Packer::new(pools, &bank, &t, config, 1).unwrap();
        let mut seen = Vec::new();
        while seen.len() < 8 {
            let s = packer.next_sample().unwrap();
            for seg in s.segments {
                seen.push(seg.text);
            }
        }
        let distinct: std::collections::HashSet<_> = seen.iter().take(8).collect();
        assert_eq!(distinct.len(), 8, "first epoch must not repeat examples");
    }
}
