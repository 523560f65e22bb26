use std::path::PathBuf;

/// Errors surfaced by the pipeline library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}:{line}: missing required field \"{field}\"")]
    MissingField {
        path: PathBuf,
        line: usize,
        field: String,
    },

    #[error("text has no alphabetic or ideographic codepoints")]
    IndeterminateLanguage,

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("training set contains only the \"{0}\" label")]
    SingleClass(String),

    #[error("document normalizes to the empty string")]
    EmptyAfterNormalize,

    #[error("document has no simhash features after normalization")]
    NoFeatures,

    #[error("invalid band/radius combination: bands={bands} must be >= radius+1={radius}+1")]
    InvalidBanding { bands: usize, radius: u32 },

    #[error("mixture targets sum to {0}, expected 1")]
    TargetsNotNormalized(f64),

    #[error("group \"{0}\" has a nonzero target but no available tokens")]
    ZeroAvailability(String),

    #[error("document {id} has no resolvable \"{dimension}\" group")]
    UnresolvableGroup { id: String, dimension: String },

    #[error("prompt bank: {0}")]
    BankInvalid(String),

    #[error("template {task}/{template_id}: example missing slot \"{slot}\"")]
    MissingSlot {
        task: String,
        template_id: String,
        slot: String,
    },

    #[error("template {task}/{template_id}: label \"{label}\" not in verbalizer")]
    UnknownLabel {
        task: String,
        template_id: String,
        label: String,
    },

    #[error("verbalizer is empty")]
    EmptyVerbalizer,

    #[error("verbalizer for \"{0}\" tokenizes to nothing")]
    EmptyVerbalizerTokens(String),

    #[error("task \"{0}\" has no {1}")]
    EmptyTask(String, &'static str),

    #[error("n-gram order must be >= 1")]
    InvalidOrder,

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("config: {0}")]
    Config(String),

    #[error("manifest conservation violated in stage \"{stage}\": kept {kept} + dropped {dropped} != input {input}")]
    ManifestImbalance {
        stage: String,
        kept: u64,
        dropped: u64,
        input: u64,
    },

    #[error("manifests carry mixed config fingerprints: {0} vs {1}")]
    MixedFingerprints(String, String),

    #[error("bad file format in {path}: {reason}")]
    BadFormat { path: PathBuf, reason: String },

    #[error("oracle subprocess: {0}")]
    Subprocess(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
