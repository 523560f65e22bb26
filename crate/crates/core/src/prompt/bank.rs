//! Prompt templates and their rendering.
//!
//! Bank file: one JSON object per line with fields
//! `{task, category, template_id, pattern, verbalizer}`. Patterns carry
//! named `{slot}` holes; the special slot `{label}` renders the example's
//! label through the verbalizer. Example file: one JSON object per line
//! with `{task, fields, label}`.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub task: String,
    pub category: String,
    pub template_id: String,
    pub pattern: String,
    #[serde(default)]
    pub verbalizer: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExample {
    pub task: String,
    #[serde(default)]
    pub fields: BTreeMap<String, String>,
    #[serde(default)]
    pub label: Option<String>,
}

/// Slot names appearing in a pattern, in order. `{{`/`}}` escape a literal
/// brace.
fn pattern_slots(pattern: &str) -> Result<Vec<String>> {
    let mut slots = Vec::new();
    let mut chars = pattern.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' => {
                if chars.peek() == Some(&'{') {
                    chars.next();
                    continue;
                }
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(c) => name.push(c),
                        None => {
                            return Err(Error::BankInvalid(format!(
                                "unterminated slot in pattern {pattern:?}"
                            )))
                        }
                    }
                }
                if name.is_empty() {
                    return Err(Error::BankInvalid(format!(
                        "unnamed slot in pattern {pattern:?}"
                    )));
                }
                slots.push(name);
            }
            '}' => {
                if chars.peek() == Some(&'}') {
                    chars.next();
                }
            }
            _ => {}
        }
    }
    Ok(slots)
}

#[derive(Debug, Clone)]
pub struct PromptBank {
    templates: Vec<PromptTemplate>,
    by_task: BTreeMap<String, Vec<usize>>,
}

impl PromptBank {
    pub fn from_templates(templates: Vec<PromptTemplate>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut by_task: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, t) in templates.iter().enumerate() {
            if !seen.insert((t.task.clone(), t.template_id.clone())) {
                return Err(Error::BankInvalid(format!(
                    "duplicate template id {}/{}",
                    t.task, t.template_id
                )));
            }
            pattern_slots(&t.pattern)?;
            let mut values = HashSet::new();
            for (label, value) in &t.verbalizer {
                if value.is_empty() {
                    return Err(Error::BankInvalid(format!(
                        "{}/{}: empty verbalizer for label \"{label}\"",
                        t.task, t.template_id
                    )));
                }
                if !values.insert(value) {
                    return Err(Error::BankInvalid(format!(
                        "{}/{}: two labels share the verbalizer string \"{value}\"",
                        t.task, t.template_id
                    )));
                }
            }
            by_task.entry(t.task.clone()).or_default().push(i);
        }
        Ok(Self { templates, by_task })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::open(path).map_err(io_err)?;
        let mut templates = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            templates.push(serde_json::from_str(&line)?);
        }
        Self::from_templates(templates)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        for t in &self.templates {
            writeln!(w, "{}", serde_json::to_string(t)?).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn tasks(&self) -> impl Iterator<Item = &str> {
        self.by_task.keys().map(String::as_str)
    }

    pub fn templates_for(&self, task: &str) -> Vec<&PromptTemplate> {
        self.by_task
            .get(task)
            .map(|idx| idx.iter().map(|&i| &self.templates[i]).collect())
            .unwrap_or_default()
    }

    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }
}

/// Substitute the example into the template's pattern. Classification
/// targets go through the verbalizer via the `{label}` slot.
pub fn render_prompt(template: &PromptTemplate, example: &PromptExample) -> Result<String> {
    let slots = pattern_slots(&template.pattern)?;
    let mut values: BTreeMap<&str, &str> = BTreeMap::new();
    for slot in &slots {
        if slot == "label" {
            let label = example.label.as_deref().ok_or_else(|| Error::MissingSlot {
                task: template.task.clone(),
                template_id: template.template_id.clone(),
                slot: "label".into(),
            })?;
            let verbalized =
                template
                    .verbalizer
                    .get(label)
                    .ok_or_else(|| Error::UnknownLabel {
                        task: template.task.clone(),
                        template_id: template.template_id.clone(),
                        label: label.to_string(),
                    })?;
            values.insert("label", verbalized);
        } else {
            let value = example
                .fields
                .get(slot.as_str())
                .ok_or_else(|| Error::MissingSlot {
                    task: template.task.clone(),
                    template_id: template.template_id.clone(),
                    slot: slot.clone(),
                })?;
            values.insert(slot, value);
        }
    }

    let mut out = String::with_capacity(template.pattern.len());
    let mut chars = template.pattern.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                out.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                out.push('}');
            }
            '{' => {
                let mut name = String::new();
                for c in chars.by_ref() {
                    if c == '}' {
                        break;
                    }
                    name.push(c);
                }
                out.push_str(values[name.as_str()]);
            }
            _ => out.push(c),
        }
    }
    Ok(out)
}

/// Read prompt examples from a line-delimited file.
pub fn read_examples(path: impl AsRef<Path>) -> Result<Vec<PromptExample>> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut examples = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        examples.push(serde_json::from_str(&line)?);
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nli_template() -> PromptTemplate {
        PromptTemplate {
            task: "nli".into(),
            category: "nli".into(),
            template_id: "t1".into(),
            pattern: "前提：{premise}。假设：{hypothesis}。两者的关系是{label}。".into(),
            verbalizer: [
                ("entailment".to_string(), "蕴含".to_string()),
                ("contradiction".to_string(), "矛盾".to_string()),
                ("neutral".to_string(), "中立".to_string()),
            ]
            .into(),
        }
    }

    fn nli_example() -> PromptExample {
        PromptExample {
            task: "nli".into(),
            fields: [
                ("premise".to_string(), "他在下雨天带了伞".to_string()),
                ("hypothesis".to_string(), "他有一把伞".to_string()),
            ]
            .into(),
            label: Some("entailment".into()),
        }
    }

    #[test]
    fn renders_nli_pair_into_one_sentence() {
        let text = render_prompt(&nli_template(), &nli_example()).unwrap();
        assert!(text.contains("他在下雨天带了伞"));
        assert!(text.contains("他有一把伞"));
        assert!(text.contains("蕴含"));
        assert!(!text.contains('{'));
    }

    #[test]
    fn missing_slot_names_the_slot() {
        let mut ex = nli_example();
        ex.fields.remove("hypothesis");
        match render_prompt(&nli_template(), &ex) {
            Err(Error::MissingSlot { slot, .. }) => assert_eq!(slot, "hypothesis"),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn unknown_label_is_rejected() {
        let mut ex = nli_example();
        ex.label = Some("maybe".into());
        assert!(matches!(
            render_prompt(&nli_template(), &ex),
            Err(Error::UnknownLabel { .. })
        ));
    }

    #[test]
    fn shared_verbalizer_string_rejected_at_load() {
        let mut t = nli_template();
        t.verbalizer.insert("extra".into(), "蕴含".into());
        assert!(matches!(
            PromptBank::from_templates(vec![t]),
            Err(Error::BankInvalid(_))
        ));
    }

    #[test]
    fn duplicate_template_id_rejected() {
        assert!(PromptBank::from_templates(vec![nli_template(), nli_template()]).is_err());
    }

    #[test]
    fn unnamed_slot_rejected() {
        let mut t = nli_template();
        t.pattern = "bad {} slot".into();
        assert!(PromptBank::from_templates(vec![t]).is_err());
    }

    #[test]
    fn escaped_braces_render_literally() {
        let t = PromptTemplate {
            task: "t".into(),
            category: "c".into(),
            template_id: "e".into(),
            pattern: "literal {{x}} and {a}".into(),
            verbalizer: BTreeMap::new(),
        };
        let ex = PromptExample {
            task: "t".into(),
            fields: [("a".to_string(), "值".to_string())].into(),
            label: None,
        };
        assert_eq!(render_prompt(&t, &ex).unwrap(), "literal {x} and 值");
    }

    #[test]
    fn bank_file_round_trips() {
        let bank = PromptBank::from_templates(vec![nli_template()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        bank.save(&path).unwrap();
        let loaded = PromptBank::load(&path).unwrap();
        assert_eq!(loaded.templates(), bank.templates());
    }
}
