use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch{}: expected {expected}, found {found}", fmt_record(.record))]
    DimensionMismatch {
        expected: usize,
        found: usize,
        record: Option<String>,
    },
    #[error("checksum mismatch for {path}: manifest says {expected}, file hashes to {actual}")]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("non-finite value in record {0}")]
    NonFiniteValue(String),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("zero-norm vector{}", fmt_record(.0))]
    ZeroNorm(Option<String>),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty query set")]
    EmptyQuerySet,
    #[error("need at least 2 scores, got {0}")]
    TooFewScores(usize),
    #[error("label set for task {task_id} has {classes} classes, need at least 2")]
    DegenerateLabelSet { task_id: String, classes: usize },
    #[error("every descriptor group is masked")]
    AllGroupsMasked,
    #[error("rule table for task {task_id} has no prototype option for class {class} in group {group}")]
    CoverageGap {
        task_id: String,
        class: String,
        group: String,
    },
    #[error("mask rate {0} is outside [0, 1) or would mask every group")]
    InvalidMaskRate(f64),
    #[error("prompt needs at least one report")]
    EmptyReports,
    #[error("LLM backend unavailable after {attempts} attempts: {reason}")]
    BackendUnavailable { attempts: u32, reason: String },
    #[error("LLM backend returned status {status}: {excerpt}")]
    BackendError { status: u16, excerpt: String },
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("no sweep candidate produced a non-empty evaluable subset")]
    EmptySweep,
    #[error("record count mismatch: manifest declares {declared}, found {found} in {what}")]
    RecordCountMismatch {
        declared: usize,
        found: usize,
        what: String,
    },
    #[error("unknown label {label:?} on record {record}")]
    UnknownLabel { record: String, label: String },
    #[error("no embedding for text {0:?}")]
    MissingText(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("sample {sample_id}: {source}")]
    Sample {
        sample_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

fn fmt_record(record: &Option<String>) -> String {
    match record {
        Some(id) => format!(" in record {id}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn dims(expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            expected,
            found,
            record: None,
        }
    }

    pub fn for_sample(self, sample_id: &str) -> Self {
        Error::Sample {
            sample_id: sample_id.to_string(),
            source: Box::new(self),
        }
    }

    /// Strips any per-sample wrapper.
    pub fn root(&self) -> &Error {
        match self {
            Error::Sample { source, .. } => source.root(),
            other => other,
        }
    }

    /// Short machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::ChecksumMismatch { .. } => "ChecksumMismatch",
            Error::NonFiniteValue(_) => "NonFiniteValue",
            Error::DuplicateId(_) => "DuplicateId",
            Error::ZeroNorm(_) => "ZeroNorm",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::EmptyQuerySet => "EmptyQuerySet",
            Error::TooFewScores(_) => "TooFewScores",
            Error::DegenerateLabelSet { .. } => "DegenerateLabelSet",
            Error::AllGroupsMasked => "AllGroupsMasked",
            Error::CoverageGap { .. } => "CoverageGap",
            Error::InvalidMaskRate(_) => "InvalidMaskRate",
            Error::EmptyReports => "EmptyReports",
            Error::BackendUnavailable { .. } => "BackendUnavailable",
            Error::BackendError { .. } => "BackendError",
            Error::DegenerateLabels => "DegenerateLabels",
            Error::EmptySweep => "EmptySweep",
            Error::RecordCountMismatch { .. } => "RecordCountMismatch",
            Error::UnknownLabel { .. } => "UnknownLabel",
            Error::MissingText(_) => "MissingText",
            Error::Config(_) => "Config",
            Error::Sample { .. } => "Sample",
            Error::Io { .. } => "Io",
            Error::Json { .. } => "Json",
        }
    }

    /// True for errors caused by bad inputs rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self.root(),
            Error::BackendUnavailable { .. } | Error::BackendError { .. } | Error::Io { .. }
        )
    }
}
