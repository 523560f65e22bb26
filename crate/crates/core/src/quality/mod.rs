//! Noise filtering: rule-based filters plus a trainable binary quality
//! classifier with a strict keep threshold (default 0.9).

mod model;
mod rules;

pub use model::{score_quality, train_quality_model, QualityConfig, QualityExample, QualityModel};
pub use rules::{apply_rules, RejectReason, RuleSet, RuleVerdict};
