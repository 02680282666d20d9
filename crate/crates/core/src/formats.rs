//! Study, taxonomy, template and journal files.
//!
//! Documents are JSON. Journals are newline-delimited JSON: a header record
//! on line 1, then one event per line, so line `N + 1` holds seq `N`.
//! Writers only ever append to a journal.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{FormatError, ReplayError};
use crate::model::{validate_model, EnumerationConfig, SystemModel};
use crate::prompts::{TemplateDocument, TemplateSet};
use crate::session::{Session, SessionEvent};
use crate::taxonomy::{HazardTaxonomy, TaxonomyDocument};

pub const FORMAT_VERSION: u32 = 1;

/// Identifies the first record of a journal file.
pub const JOURNAL_MAGIC: &str = "ehazop-journal";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyDocument {
    pub format_version: u32,
    pub system: SystemModel,
    #[serde(default)]
    pub enumeration_config: EnumerationConfig,
}

impl StudyDocument {
    pub fn new(system: SystemModel, enumeration_config: EnumerationConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            system,
            enumeration_config,
        }
    }

    /// Hex SHA-256 of the canonical form.
    pub fn digest(&self) -> String {
        digest_hex(canonical_json(self).as_bytes())
    }
}

pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Compact JSON with object keys sorted at every level.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    fn sort(value: Value) -> Value {
        match value {
            Value::Object(map) => {
                let mut entries: Vec<_> = map.into_iter().collect();
                entries.sort_by(|a, b| a.0.cmp(&b.0));
                Value::Object(entries.into_iter().map(|(k, v)| (k, sort(v))).collect())
            }
            Value::Array(items) => Value::Array(items.into_iter().map(sort).collect()),
            other => other,
        }
    }
    let value = serde_json::to_value(value).expect("document serializes to JSON");
    sort(value).to_string()
}

fn read_text(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(value).expect("document serializes to JSON");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

/// Parses a versioned document, reporting syntax errors with line and column.
fn parse_versioned<T: DeserializeOwned>(text: &str, path: Option<&Path>) -> Result<T, FormatError> {
    let value: Value = serde_json::from_str(text).map_err(|e| FormatError::parse(path, &e))?;
    match value.get("format_version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(FormatError::UnsupportedVersion {
                found: v,
                supported: FORMAT_VERSION,
            })
        }
        None => {
            return Err(FormatError::Parse {
                path: path.map(PathBuf::from),
                line: 1,
                column: 1,
                message: "missing numeric `format_version`".into(),
            })
        }
    }
    serde_json::from_str(text).map_err(|e| FormatError::parse(path, &e))
}

pub fn parse_study(text: &str, path: Option<&Path>) -> Result<StudyDocument, FormatError> {
    let doc: StudyDocument = parse_versioned(text, path)?;
    let report = validate_model(&doc.system);
    if !report.is_valid() {
        return Err(FormatError::Invalid(report));
    }
    doc.enumeration_config.validate()?;
    Ok(doc)
}

pub fn load_study(path: impl AsRef<Path>) -> Result<StudyDocument, FormatError> {
    let path = path.as_ref();
    parse_study(&read_text(path)?, Some(path))
}

pub fn save_study(path: impl AsRef<Path>, doc: &StudyDocument) -> Result<(), FormatError> {
    write_pretty(path.as_ref(), doc)
}

pub fn parse_taxonomy(text: &str, path: Option<&Path>) -> Result<HazardTaxonomy, FormatError> {
    let doc: TaxonomyDocument = parse_versioned(text, path)?;
    Ok(HazardTaxonomy::from_document(&doc)?)
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<HazardTaxonomy, FormatError> {
    let path = path.as_ref();
    parse_taxonomy(&read_text(path)?, Some(path))
}

pub fn save_taxonomy(path: impl AsRef<Path>, taxonomy: &HazardTaxonomy) -> Result<(), FormatError> {
    write_pretty(path.as_ref(), &taxonomy.to_document())
}

pub fn parse_templates(text: &str, path: Option<&Path>) -> Result<TemplateSet, FormatError> {
    let doc: TemplateDocument = parse_versioned(text, path)?;
    Ok(TemplateSet::from_document(doc)?)
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<TemplateSet, FormatError> {
    let path = path.as_ref();
    parse_templates(&read_text(path)?, Some(path))
}

pub fn save_templates(path: impl AsRef<Path>, templates: &TemplateSet) -> Result<(), FormatError> {
    write_pretty(path.as_ref(), &templates.to_document())
}

/// First record of a journal file. It carries the study and base taxonomy so
/// a journal replays on its own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalHeader {
    pub journal: String,
    pub format_version: u32,
    pub study_digest: String,
    pub study: StudyDocument,
    pub taxonomy: TaxonomyDocument,
}

impl JournalHeader {
    pub fn for_session(session: &Session) -> Self {
        Self {
            journal: JOURNAL_MAGIC.to_string(),
            format_version: FORMAT_VERSION,
            study_digest: session.study().digest(),
            study: session.study().clone(),
            taxonomy: session.base_taxonomy().to_document(),
        }
    }
}

pub fn event_line(event: &SessionEvent) -> String {
    serde_json::to_string(event).expect("event serializes to JSON")
}

/// A journal read into memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Journal {
    pub header: JournalHeader,
    pub events: Vec<SessionEvent>,
}

/// Result of scanning journal text: the records plus the byte length of
/// the well-formed prefix.
struct Scan {
    journal: Journal,
    valid_len: usize,
}

fn scan_journal(text: &str, path: Option<&Path>) -> Result<Scan, FormatError> {
    let mut offset = 0;
    let mut header: Option<JournalHeader> = None;
    let mut events: Vec<SessionEvent> = Vec::new();
    let mut valid_len = 0;
    for (index, raw) in text.split_inclusive('\n').enumerate() {
        let line_no = index + 1;
        let terminated = raw.ends_with('\n');
        let line = raw.trim_end_matches(['\n', '\r']);
        offset += raw.len();
        let parse_err = |e: &serde_json::Error| FormatError::Parse {
            path: path.map(PathBuf::from),
            line: line_no,
            column: e.column(),
            message: e.to_string(),
        };
        if header.is_none() {
            let h: JournalHeader = parse_versioned(line, path).map_err(|e| match e {
                FormatError::Parse { message, column, .. } => FormatError::Parse {
                    path: path.map(PathBuf::from),
                    line: line_no,
                    column,
                    message,
                },
                other => other,
            })?;
            if h.journal != JOURNAL_MAGIC {
                return Err(FormatError::Parse {
                    path: path.map(PathBuf::from),
                    line: 1,
                    column: 1,
                    message: format!("not a journal header (journal = {:?})", h.journal),
                });
            }
            header = Some(h);
            valid_len = offset;
            continue;
        }
        if line.trim().is_empty() && !terminated {
            continue;
        }
        let event: SessionEvent = match serde_json::from_str(line) {
            Ok(event) => event,
            // A torn final write was never acknowledged.
            Err(e) if !terminated => {
                log::warn!("ignoring incomplete final journal line {line_no}: {e}");
                break;
            }
            Err(e) => return Err(parse_err(&e)),
        };
        let expected = events.len() as u64 + 1;
        if event.seq != expected {
            return Err(ReplayError::Corrupt {
                seq: event.seq,
                reason: format!("line {line_no} must hold seq {expected}"),
            }
            .into());
        }
        events.push(event);
        valid_len = offset;
    }
    let header = header.ok_or_else(|| FormatError::Parse {
        path: path.map(PathBuf::from),
        line: 1,
        column: 1,
        message: "empty journal".into(),
    })?;
    Ok(Scan {
        journal: Journal { header, events },
        valid_len,
    })
}

impl Journal {
    pub fn from_session(session: &Session) -> Self {
        Self {
            header: JournalHeader::for_session(session),
            events: session.events().to_vec(),
        }
    }

    pub fn parse(text: &str, path: Option<&Path>) -> Result<Self, FormatError> {
        scan_journal(text, path).map(|s| s.journal)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        let path = path.as_ref();
        Self::parse(&read_text(path)?, Some(path))
    }

    pub fn to_text(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for event in &self.events {
            out.push_str(&event_line(event));
            out.push('\n');
        }
        out
    }

    pub fn taxonomy(&self) -> Result<HazardTaxonomy, FormatError> {
        Ok(HazardTaxonomy::from_document(&self.header.taxonomy)?)
    }

    /// Folds the journal into a session after checking the header digest.
    pub fn replay(&self) -> Result<Session, FormatError> {
        let found = self.header.study.digest();
        if found != self.header.study_digest {
            return Err(ReplayError::DigestMismatch {
                expected: self.header.study_digest.clone(),
                found,
            }
            .into());
        }
        Ok(Session::replay(
            self.header.study.clone(),
            self.taxonomy()?,
            self.events.iter().cloned(),
        )?)
    }
}

/// Single appender for a journal file, holding an exclusive advisory lock.
#[derive(Debug)]
pub struct JournalWriter {
    file: File,
    path: PathBuf,
    last_seq: u64,
}

fn lock(file: &File, path: &Path) -> Result<(), FormatError> {
    file.try_lock().map_err(|e| match e {
        std::fs::TryLockError::WouldBlock => FormatError::Locked(path.to_path_buf()),
        std::fs::TryLockError::Error(e) => FormatError::io(path, e),
    })
}

impl JournalWriter {
    /// Creates a new journal holding every event of `session` so far.
    pub fn create(path: impl AsRef<Path>, session: &Session) -> Result<Self, FormatError> {
        let path = path.as_ref();
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => FormatError::AlreadyExists(path.to_path_buf()),
                _ => FormatError::io(path, e),
            })?;
        lock(&file, path)?;
        let mut writer = Self {
            file,
            path: path.to_path_buf(),
            last_seq: 0,
        };
        // Header and existing events go out in one synced write.
        let mut text =
            serde_json::to_string(&JournalHeader::for_session(session)).expect("header serializes");
        text.push('\n');
        for event in session.events() {
            text.push_str(&event_line(event));
            text.push('\n');
        }
        writer.write_raw(text.as_bytes())?;
        writer.last_seq = session.state().last_seq();
        Ok(writer)
    }

    /// Opens an existing journal for appending. A torn final line is cut
    /// off before new events are written.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Journal), FormatError> {
        let path = path.as_ref();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .open(path)
            .map_err(|e| FormatError::io(path, e))?;
        lock(&file, path)?;
        let mut text = String::new();
        file.read_to_string(&mut text)
            .map_err(|e| FormatError::io(path, e))?;
        let scan = scan_journal(&text, Some(path))?;
        if scan.valid_len < text.len() {
            file.set_len(scan.valid_len as u64)
                .map_err(|e| FormatError::io(path, e))?;
        }
        file.seek(SeekFrom::End(0))
            .map_err(|e| FormatError::io(path, e))?;
        let last_seq = scan.journal.events.last().map_or(0, |e| e.seq);
        let mut writer = Self {
            file,
            path: path.to_path_buf(),
            last_seq,
        };
        if !text[..scan.valid_len].ends_with('\n') {
            writer.write_raw(b"\n")?;
        }
        Ok((writer, scan.journal))
    }

    /// Opens a journal that must belong to `study`.
    pub fn open_for_study(
        path: impl AsRef<Path>,
        study: &StudyDocument,
    ) -> Result<(Self, Journal), FormatError> {
        let (writer, journal) = Self::open(path)?;
        let found = study.digest();
        if journal.header.study_digest != found {
            return Err(ReplayError::DigestMismatch {
                expected: journal.header.study_digest,
                found,
            }
            .into());
        }
        Ok((writer, journal))
    }

    /// Appends one event and syncs it to disk before returning.
    pub fn append(&mut self, event: &SessionEvent) -> Result<(), FormatError> {
        let expected = self.last_seq + 1;
        if event.seq != expected {
            return Err(ReplayError::Corrupt {
                seq: event.seq,
                reason: format!("append expected seq {expected}"),
            }
            .into());
        }
        self.write_line(&event_line(event))?;
        self.last_seq = event.seq;
        Ok(())
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write_line(&mut self, line: &str) -> Result<(), FormatError> {
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
        self.write_raw(&buf)
    }

    fn write_raw(&mut self, bytes: &[u8]) -> Result<(), FormatError> {
        self.file
            .write_all(bytes)
            .and_then(|()| self.file.sync_data())
            .map_err(|e| FormatError::io(&self.path, e))
    }
}

/// Replays the journal at `path`.
pub fn replay_file(path: impl AsRef<Path>) -> Result<Session, FormatError> {
    Journal::read(path)?.replay()
}
