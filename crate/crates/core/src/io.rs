//! Line-delimited record I/O.
//!
//! Record grammar: one JSON object per line, UTF-8, fields exactly
//! `{"id", "source", "text", "meta"}`. Unknown fields are rejected under
//! strict mode and ignored otherwise.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::doc::{is_valid_source, Document, OrderKey};
use crate::error::{Error, Result};

/// What to do with a line that does not parse as a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MalformedPolicy {
    /// Fail the whole read, naming the offending line.
    #[default]
    Abort,
    /// Drop the line and count it.
    Skip,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    pub policy: MalformedPolicy,
    /// Reject records carrying fields outside the grammar.
    pub strict: bool,
}

/// Streaming reader over one shard file. Yields documents in file order with
/// `order_key = (shard, line_number)` already assigned.
pub struct RecordReader {
    path: PathBuf,
    lines: Lines<BufReader<File>>,
    shard: u32,
    line_no: usize,
    opts: ReadOptions,
    skipped: u64,
}

impl RecordReader {
    pub fn open(path: impl AsRef<Path>, shard: u32, opts: ReadOptions) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        Ok(Self {
            path,
            lines: BufReader::new(file).lines(),
            shard,
            line_no: 0,
            opts,
            skipped: 0,
        })
    }

    /// Lines dropped so far under the skip policy.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }
}

impl Iterator for RecordReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(source) => {
                    return Some(Err(Error::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            };
            let line_no = self.line_no;
            self.line_no += 1;
            match parse_record(&line, self.opts.strict) {
                Ok(mut doc) => {
                    doc.order_key = OrderKey::new(self.shard, line_no as u64);
                    return Some(Ok(doc));
                }
                Err(reason) => match self.opts.policy {
                    MalformedPolicy::Skip => {
                        self.skipped += 1;
                        continue;
                    }
                    MalformedPolicy::Abort => {
                        return Some(Err(match reason {
                            ParseFailure::Missing(field) => Error::MissingField {
                                path: self.path.clone(),
                                line: line_no,
                                field,
                            },
                            ParseFailure::Other(reason) => Error::MalformedRecord {
                                path: self.path.clone(),
                                line: line_no,
                                reason,
                            },
                        }))
                    }
                },
            }
        }
    }
}

enum ParseFailure {
    Missing(String),
    Other(String),
}

fn parse_record(line: &str, strict: bool) -> std::result::Result<Document, ParseFailure> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| ParseFailure::Other(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ParseFailure::Other("not a JSON object".into()))?;
    if strict {
        for key in obj.keys() {
            if !matches!(key.as_str(), "id" | "source" | "text" | "meta") {
                return Err(ParseFailure::Other(format!("unknown field \"{key}\"")));
            }
        }
    }
    let field = |name: &str| -> std::result::Result<&str, ParseFailure> {
        obj.get(name)
            .ok_or_else(|| ParseFailure::Missing(name.into()))?
            .as_str()
            .ok_or_else(|| ParseFailure::Other(format!("field \"{name}\" is not a string")))
    };
    let id = field("id")?;
    let source = field("source")?;
    let text = field("text")?;
    if text.is_empty() {
        return Err(ParseFailure::Other("empty text".into()));
    }
    if !is_valid_source(source) {
        return Err(ParseFailure::Other(format!("unknown source \"{source}\"")));
    }
    let mut meta = BTreeMap::new();
    if let Some(m) = obj.get("meta") {
        let m = m
            .as_object()
            .ok_or_else(|| ParseFailure::Other("\"meta\" is not an object".into()))?;
        for (k, v) in m {
            let v = v
                .as_str()
                .ok_or_else(|| ParseFailure::Other(format!("meta value \"{k}\" not a string")))?;
            meta.insert(k.clone(), v.to_string());
        }
    }
    Ok(Document {
        id: id.to_string(),
        source: source.to_string(),
        text: text.to_string(),
        meta,
        order_key: OrderKey::default(),
    })
}

/// Read a whole shard into memory. Returns the documents plus the number of
/// lines skipped under the skip policy.
pub fn read_records(
    path: impl AsRef<Path>,
    shard: u32,
    opts: ReadOptions,
) -> Result<(Vec<Document>, u64)> {
    let mut reader = RecordReader::open(path, shard, opts)?;
    let mut docs = Vec::new();
    for doc in reader.by_ref() {
        docs.push(doc?);
    }
    Ok((docs, reader.skipped()))
}

/// Read several shard files; shard index = position in the input list.
pub fn read_corpus(paths: &[PathBuf], opts: ReadOptions) -> Result<(Vec<Document>, u64)> {
    let mut docs = Vec::new();
    let mut skipped = 0;
    for (shard, path) in paths.iter().enumerate() {
        let (mut shard_docs, shard_skipped) = read_records(path, shard as u32, opts)?;
        docs.append(&mut shard_docs);
        skipped += shard_skipped;
    }
    Ok((docs, skipped))
}

/// Serialize one document to its canonical single-line form.
pub fn record_line(doc: &Document) -> String {
    serde_json::to_string(doc).expect("document serialization cannot fail")
}

pub fn write_records(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    for doc in docs {
        writeln!(w, "{}", record_line(doc)).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
