//! Corpus records and the canonical total order they carry.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Canonical position of a record: (input-file position, line number).
///
/// Every "keep first occurrence" rule downstream resolves ties with this key,
/// so results do not depend on how shards were scheduled.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct OrderKey {
    pub shard: u32,
    pub record: u64,
}

impl OrderKey {
    pub fn new(shard: u32, record: u64) -> Self {
        Self { shard, record }
    }
}

/// One corpus record; the unit that flows through every stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub source: String,
    pub text: String,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
    #[serde(skip)]
    pub order_key: OrderKey,
}

impl Document {
    pub fn new(id: impl Into<String>, source: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            text: text.into(),
            meta: BTreeMap::new(),
            order_key: OrderKey::default(),
        }
    }

    pub fn with_order(mut self, shard: u32, record: u64) -> Self {
        self.order_key = OrderKey::new(shard, record);
        self
    }
}

/// The built-in source tags; `custom:*` is also accepted.
pub const KNOWN_SOURCES: &[&str] = &["common_crawl", "books", "news", "forums", "academic"];

pub fn is_valid_source(tag: &str) -> bool {
    KNOWN_SOURCES.contains(&tag) || tag.strip_prefix("custom:").is_some_and(|s| !s.is_empty())
}
