use std::path::PathBuf;

use thiserror::Error;

use crate::model::{GuideWord, SubjectShape, ValidationReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid system model: {0}")]
    Invalid(ValidationReport),
    #[error("enumeration config must enable at least one subject family")]
    EmptyConfig,
    #[error("unknown guideword `{0}`")]
    UnknownGuideWord(String),
    #[error("malformed cell id `{0}`")]
    MalformedCellId(String),
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("hazard name must not be empty")]
    EmptyName,
    #[error("hazard `{name}` already exists as `{existing}`")]
    Duplicate { name: String, existing: String },
    #[error("alias `{alias}` collides with existing entry `{existing}`")]
    AliasCollision { alias: String, existing: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("cell refers to unknown {kind} `{id}`")]
    UnknownReference { kind: &'static str, id: String },
    #[error("no template for {guideword} / {shape:?}")]
    MissingTemplate {
        guideword: GuideWord,
        shape: SubjectShape,
    },
    #[error("more than one template for {guideword} / {shape:?}")]
    DuplicateTemplate {
        guideword: GuideWord,
        shape: SubjectShape,
    },
    #[error("template for {guideword} / {shape:?} uses slot `{{{slot}}}` which that shape cannot fill")]
    UnfillableSlot {
        guideword: GuideWord,
        shape: SubjectShape,
        slot: String,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("unknown cell `{0}`")]
    UnknownCell(String),
    #[error("unknown finding `{0}`")]
    UnknownFinding(String),
    #[error("unknown note target `{0}`")]
    UnknownTarget(String),
    #[error("hazard `{0}` is not in the taxonomy; register it as a novel hazard first")]
    UnresolvedHazard(String),
    #[error("`{hazard}` is already recorded for this function scope as {existing}; merge the notes or resubmit as a distinct presentation")]
    DuplicateFinding { existing: String, hazard: String },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("session is closed")]
    Closed,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("corrupt journal at seq {seq}: {reason}")]
    Corrupt { seq: u64, reason: String },
    #[error("study digest mismatch: journal expects {expected}, study is {found}")]
    DigestMismatch { expected: String, found: String },
    #[error("event seq {seq} rejected: {source}")]
    Rejected {
        seq: u64,
        #[source]
        source: SessionError,
    },
}

impl ReplayError {
    pub fn seq(&self) -> Option<u64> {
        match self {
            ReplayError::Corrupt { seq, .. } | ReplayError::Rejected { seq, .. } => Some(*seq),
            ReplayError::DigestMismatch { .. } => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}parse error at line {line}, column {column}: {message}", origin(.path))]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u64, supported: u32 },
    #[error("invalid study: {0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("journal {0} already exists")]
    AlreadyExists(PathBuf),
    #[error("journal {0} is locked by another writer")]
    Locked(PathBuf),
}

fn origin(path: &Option<PathBuf>) -> String {
    path.as_ref()
        .map(|p| format!("{}: ", p.display()))
        .unwrap_or_default()
}

impl FormatError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: Option<&std::path::Path>, err: &serde_json::Error) -> Self {
        FormatError::Parse {
            path: path.map(PathBuf::from),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    /// True when the input itself is malformed or inconsistent, as opposed
    /// to unreadable or invalid-but-well-formed.
    pub fn is_corrupt(&self) -> bool {
        matches!(
            self,
            FormatError::Parse { .. } | FormatError::UnsupportedVersion { .. } | FormatError::Replay(_)
        )
    }
}
