//! Event-sourced study sessions.
//!
//! A session is an append-only list of [`SessionEvent`]s. Every piece of
//! session state (findings, links, cell statuses, hazards registered during
//! the workshop) is a fold over that list, so replaying a journal always
//! reproduces the live session exactly. Event timestamps are informational
//! and never reach the fold.
//!
//! Commands are validated against the current state and turned into events;
//! a command that fails validation appends nothing.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{ReplayError, SessionError};
use crate::formats::StudyDocument;
use crate::model::{
    enumerate_cells, CellId, EnumerationConfig, ExaminationCell, GuideWord, Subject, SubjectSelector,
    SubjectShape, SystemModel,
};
use crate::taxonomy::{HazardEntry, HazardTaxonomy, Resolution};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Classification {
    Simple,
    Complex,
    #[default]
    Unclassified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Relation {
    Reinforces,
    LeadsTo,
    PresentsAs,
    Related,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Reinforces => "REINFORCES",
            Relation::LeadsTo => "LEADS_TO",
            Relation::PresentsAs => "PRESENTS_AS",
            Relation::Related => "RELATED",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CellStatus {
    #[default]
    Unexplored,
    Open,
    Explored,
    Deferred,
    NotApplicable,
}

impl CellStatus {
    pub const ALL: [CellStatus; 5] = [
        CellStatus::Unexplored,
        CellStatus::Open,
        CellStatus::Explored,
        CellStatus::Deferred,
        CellStatus::NotApplicable,
    ];

    /// Statuses a facilitator may set explicitly.
    pub fn is_markable(self) -> bool {
        matches!(
            self,
            CellStatus::Explored | CellStatus::Deferred | CellStatus::NotApplicable
        )
    }
}

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellStatus::Unexplored => "UNEXPLORED",
            CellStatus::Open => "OPEN",
            CellStatus::Explored => "EXPLORED",
            CellStatus::Deferred => "DEFERRED",
            CellStatus::NotApplicable => "NOT_APPLICABLE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub id: String,
    pub cell: CellId,
    pub hazard: String,
    pub scenario: String,
    pub notes: String,
    pub classification: Classification,
    pub distinct_presentation: bool,
    pub is_novel: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingLink {
    pub from: String,
    pub to: String,
    pub relation: Relation,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub text: String,
}

/// The functions a finding speaks about. Generic characteristic subjects
/// cover every function.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FunctionScope {
    Functions(BTreeSet<String>),
    AllFunctions,
}

impl From<&Subject> for FunctionScope {
    fn from(subject: &Subject) -> Self {
        if subject.functions.is_empty() {
            FunctionScope::AllFunctions
        } else {
            FunctionScope::Functions(subject.functions.clone())
        }
    }
}

/// Identity used to suppress duplicate findings. Guideword and
/// characteristic are deliberately not part of it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DedupKey {
    pub hazard: String,
    pub function_scope: FunctionScope,
}

pub fn finding_id(ordinal: usize) -> String {
    format!("F{ordinal:02}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventPayload {
    SessionStarted {
        study_digest: String,
        config: EnumerationConfig,
    },
    CellOpened {
        cell: CellId,
    },
    FindingRecorded {
        finding: String,
        cell: CellId,
        hazard: String,
        scenario: String,
        notes: String,
        classification: Classification,
        distinct_presentation: bool,
    },
    FindingLinked {
        from: String,
        to: String,
        relation: Relation,
        note: String,
    },
    CellMarked {
        cell: CellId,
        status: CellStatus,
    },
    HazardRegistered {
        name: String,
        description: String,
    },
    NoteAdded {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<String>,
        text: String,
    },
    SessionClosed {},
}

impl EventPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            EventPayload::SessionStarted { .. } => "SESSION_STARTED",
            EventPayload::CellOpened { .. } => "CELL_OPENED",
            EventPayload::FindingRecorded { .. } => "FINDING_RECORDED",
            EventPayload::FindingLinked { .. } => "FINDING_LINKED",
            EventPayload::CellMarked { .. } => "CELL_MARKED",
            EventPayload::HazardRegistered { .. } => "HAZARD_REGISTERED",
            EventPayload::NoteAdded { .. } => "NOTE_ADDED",
            EventPayload::SessionClosed {} => "SESSION_CLOSED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub payload: EventPayload,
}

/// Input for recording a finding. The hazard may be any spelling the
/// taxonomy resolves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingDraft {
    pub cell: CellId,
    pub hazard: String,
    #[serde(default)]
    pub scenario: String,
    #[serde(default)]
    pub notes: String,
    #[serde(default)]
    pub classification: Classification,
    #[serde(default)]
    pub distinct_presentation: bool,
}

impl FindingDraft {
    pub fn new(cell: impl Into<CellId>, hazard: impl Into<String>) -> Self {
        Self {
            cell: cell.into(),
            hazard: hazard.into(),
            scenario: String::new(),
            notes: String::new(),
            classification: Classification::Unclassified,
            distinct_presentation: false,
        }
    }

    pub fn scenario(mut self, text: impl Into<String>) -> Self {
        self.scenario = text.into();
        self
    }

    pub fn notes(mut self, text: impl Into<String>) -> Self {
        self.notes = text.into();
        self
    }

    pub fn classification(mut self, classification: Classification) -> Self {
        self.classification = classification;
        self
    }

    pub fn distinct(mut self) -> Self {
        self.distinct_presentation = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    OpenCell {
        cell: CellId,
    },
    RecordFinding(FindingDraft),
    LinkFindings {
        from: String,
        to: String,
        relation: Relation,
        #[serde(default)]
        note: String,
    },
    MarkCell {
        cell: CellId,
        status: CellStatus,
    },
    RegisterHazard {
        name: String,
        #[serde(default)]
        description: String,
    },
    AddNote {
        #[serde(default)]
        target: Option<String>,
        text: String,
    },
    CloseSession,
}

/// What an applied event changed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Started,
    CellStatus { cell: CellId, status: CellStatus },
    FindingRecorded { finding: Finding },
    FindingLinked { link: FindingLink },
    HazardRegistered { entry: HazardEntry },
    NoteAdded { note: Note },
    SessionClosed,
}

/// Pure fold target: everything a session knows, derived from its events.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    study_digest: String,
    model: SystemModel,
    config: EnumerationConfig,
    cells: Vec<ExaminationCell>,
    cell_index: HashMap<CellId, usize>,
    statuses: Vec<CellStatus>,
    taxonomy: HazardTaxonomy,
    findings: Vec<Finding>,
    finding_index: HashMap<String, usize>,
    links: Vec<FindingLink>,
    notes: Vec<Note>,
    dedup: HashMap<DedupKey, String>,
    last_seq: u64,
    closed: bool,
}

impl SessionState {
    fn initial(
        model: SystemModel,
        config: EnumerationConfig,
        taxonomy: HazardTaxonomy,
        study_digest: String,
    ) -> Result<Self, SessionError> {
        let cells = enumerate_cells(&model, &config)?;
        let cell_index = cells.iter().enumerate().map(|(i, c)| (c.id.clone(), i)).collect();
        Ok(Self {
            study_digest,
            model,
            config,
            statuses: vec![CellStatus::Unexplored; cells.len()],
            cells,
            cell_index,
            taxonomy,
            findings: Vec::new(),
            finding_index: HashMap::new(),
            links: Vec::new(),
            notes: Vec::new(),
            dedup: HashMap::new(),
            last_seq: 1,
            closed: false,
        })
    }

    pub fn study_digest(&self) -> &str {
        &self.study_digest
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn config(&self) -> &EnumerationConfig {
        &self.config
    }

    pub fn taxonomy(&self) -> &HazardTaxonomy {
        &self.taxonomy
    }

    pub fn cells(&self) -> &[ExaminationCell] {
        &self.cells
    }

    pub fn cell(&self, id: &CellId) -> Option<&ExaminationCell> {
        self.cell_index.get(id).map(|&i| &self.cells[i])
    }

    pub fn status(&self, id: &CellId) -> Option<CellStatus> {
        self.cell_index.get(id).map(|&i| self.statuses[i])
    }

    /// Cells paired with their current status, in enumeration order.
    pub fn cell_statuses(&self) -> impl Iterator<Item = (&ExaminationCell, CellStatus)> {
        self.cells.iter().zip(self.statuses.iter().copied())
    }

    /// All accepted findings in journal order. Rejected duplicates never
    /// enter the journal, so every finding here is distinct.
    pub fn findings(&self) -> &[Finding] {
        &self.findings
    }

    pub fn finding(&self, id: &str) -> Option<&Finding> {
        self.finding_index.get(id).map(|&i| &self.findings[i])
    }

    /// Findings on cells whose subject belongs to `selector`'s group.
    pub fn findings_for<'a>(
        &'a self,
        selector: &'a SubjectSelector,
    ) -> impl Iterator<Item = &'a Finding> + 'a {
        self.findings.iter().filter(move |f| {
            self.cell(&f.cell)
                .is_some_and(|cell| selector.matches(&cell.subject))
        })
    }

    pub fn links(&self) -> &[FindingLink] {
        &self.links
    }

    /// Links touching `finding` in either direction.
    pub fn links_of<'a>(&'a self, finding: &'a str) -> impl Iterator<Item = &'a FindingLink> + 'a {
        self.links
            .iter()
            .filter(move |l| l.from == finding || l.to == finding)
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    fn cell_position(&self, id: &CellId) -> Result<usize, SessionError> {
        self.cell_index
            .get(id)
            .copied()
            .ok_or_else(|| SessionError::UnknownCell(id.to_string()))
    }

    fn require_finding(&self, id: &str) -> Result<(), SessionError> {
        if self.finding_index.contains_key(id) {
            Ok(())
        } else {
            Err(SessionError::UnknownFinding(id.to_string()))
        }
    }

    fn dedup_key(&self, cell: usize, hazard: &str) -> DedupKey {
        DedupKey {
            hazard: hazard.to_string(),
            function_scope: FunctionScope::from(&self.cells[cell].subject),
        }
    }

    /// Validates `payload` at this position and applies it. Nothing is
    /// mutated when validation fails.
    fn apply(&mut self, payload: &EventPayload) -> Result<Outcome, SessionError> {
        if self.closed {
            return Err(SessionError::Closed);
        }
        match payload {
            EventPayload::SessionStarted { .. } => {
                Err(SessionError::InvalidArgument("session already started".into()))
            }
            EventPayload::CellOpened { cell } => {
                let i = self.cell_position(cell)?;
                self.statuses[i] = CellStatus::Open;
                Ok(Outcome::CellStatus {
                    cell: cell.clone(),
                    status: CellStatus::Open,
                })
            }
            EventPayload::FindingRecorded {
                finding,
                cell,
                hazard,
                scenario,
                notes,
                classification,
                distinct_presentation,
            } => {
                let i = self.cell_position(cell)?;
                let resolved = match self.taxonomy.resolve(hazard)? {
                    Resolution::Known(r) => r,
                    Resolution::Unresolved { .. } => {
                        return Err(SessionError::UnresolvedHazard(hazard.clone()))
                    }
                };
                let expected = finding_id(self.findings.len() + 1);
                if *finding != expected {
                    return Err(SessionError::InvalidArgument(format!(
                        "finding id {finding} out of order, expected {expected}"
                    )));
                }
                let key = self.dedup_key(i, &resolved.canonical_name);
                if !distinct_presentation {
                    if let Some(existing) = self.dedup.get(&key) {
                        return Err(SessionError::DuplicateFinding {
                            existing: existing.clone(),
                            hazard: resolved.canonical_name,
                        });
                    }
                }

                let record = Finding {
                    id: expected,
                    cell: cell.clone(),
                    hazard: resolved.canonical_name,
                    scenario: scenario.clone(),
                    notes: notes.clone(),
                    classification: *classification,
                    distinct_presentation: *distinct_presentation,
                    is_novel: resolved.is_novel,
                };
                if !distinct_presentation {
                    self.dedup.insert(key, record.id.clone());
                }
                if self.statuses[i] == CellStatus::Unexplored {
                    self.statuses[i] = CellStatus::Open;
                }
                self.finding_index.insert(record.id.clone(), self.findings.len());
                self.findings.push(record.clone());
                Ok(Outcome::FindingRecorded { finding: record })
            }
            EventPayload::FindingLinked {
                from,
                to,
                relation,
                note,
            } => {
                if from == to {
                    return Err(SessionError::InvalidArgument(format!(
                        "cannot link finding {from} to itself"
                    )));
                }
                self.require_finding(from)?;
                self.require_finding(to)?;
                let link = FindingLink {
                    from: from.clone(),
                    to: to.clone(),
                    relation: *relation,
                    note: note.clone(),
                };
                self.links.push(link.clone());
                Ok(Outcome::FindingLinked { link })
            }
            EventPayload::CellMarked { cell, status } => {
                let i = self.cell_position(cell)?;
                if !status.is_markable() {
                    return Err(SessionError::InvalidArgument(format!(
                        "status {status} cannot be set directly; use EXPLORED, DEFERRED or NOT_APPLICABLE"
                    )));
                }
                self.statuses[i] = *status;
                Ok(Outcome::CellStatus {
                    cell: cell.clone(),
                    status: *status,
                })
            }
            EventPayload::HazardRegistered { name, description } => {
                let entry = self.taxonomy.register_novel(name, description)?.clone();
                Ok(Outcome::HazardRegistered { entry })
            }
            EventPayload::NoteAdded { target, text } => {
                if let Some(target) = target {
                    let known = self.cell_index.contains_key(&CellId::from(target.as_str()))
                        || self.finding_index.contains_key(target);
                    if !known {
                        return Err(SessionError::UnknownTarget(target.clone()));
                    }
                }
                let note = Note {
                    seq: self.last_seq + 1,
                    target: target.clone(),
                    text: text.clone(),
                };
                self.notes.push(note.clone());
                Ok(Outcome::NoteAdded { note })
            }
            EventPayload::SessionClosed {} => {
                self.closed = true;
                Ok(Outcome::SessionClosed)
            }
        }
    }

    /// Turns a command into the event it would append, resolving names
    /// against the current state.
    fn plan(&self, command: Command) -> Result<EventPayload, SessionError> {
        Ok(match command {
            Command::OpenCell { cell } => EventPayload::CellOpened { cell },
            Command::RecordFinding(draft) => {
                let canonical = match self.taxonomy.resolve(&draft.hazard)? {
                    Resolution::Known(r) => r.canonical_name,
                    Resolution::Unresolved { .. } => {
                        return Err(SessionError::UnresolvedHazard(draft.hazard))
                    }
                };
                EventPayload::FindingRecorded {
                    finding: finding_id(self.findings.len() + 1),
                    cell: draft.cell,
                    hazard: canonical,
                    scenario: draft.scenario,
                    notes: draft.notes,
                    classification: draft.classification,
                    distinct_presentation: draft.distinct_presentation,
                }
            }
            Command::LinkFindings {
                from,
                to,
                relation,
                note,
            } => EventPayload::FindingLinked {
                from,
                to,
                relation,
                note,
            },
            Command::MarkCell { cell, status } => EventPayload::CellMarked { cell, status },
            Command::RegisterHazard { name, description } => {
                EventPayload::HazardRegistered { name, description }
            }
            Command::AddNote { target, text } => EventPayload::NoteAdded { target, text },
            Command::CloseSession => EventPayload::SessionClosed {},
        })
    }

    pub fn coverage(&self) -> CoverageMatrix {
        self.coverage_where(&CellFilter::default())
    }

    pub fn coverage_where(&self, filter: &CellFilter) -> CoverageMatrix {
        let mut matrix = CoverageMatrix::default();
        let mut subject_pos: HashMap<&Subject, usize> = HashMap::new();
        for (cell, status) in self.cell_statuses() {
            if !filter.matches(cell, status) {
                continue;
            }
            matrix.cells.push(CellCoverage {
                cell: cell.id.clone(),
                guideword: cell.guideword,
                subject: cell.subject.to_string(),
                status,
            });
            matrix.totals.add(status);
            match matrix
                .by_guideword
                .iter_mut()
                .find(|t| t.guideword == cell.guideword)
            {
                Some(t) => t.tally.add(status),
                None => {
                    let mut tally = StatusTally::default();
                    tally.add(status);
                    matrix.by_guideword.push(GuidewordTally {
                        guideword: cell.guideword,
                        tally,
                    });
                }
            }
            let pos = *subject_pos.entry(&cell.subject).or_insert_with(|| {
                matrix.by_subject.push(SubjectTally {
                    subject: cell.subject.to_string(),
                    tally: StatusTally::default(),
                });
                matrix.by_subject.len() - 1
            });
            matrix.by_subject[pos].tally.add(status);
        }
        let total = matrix.totals.total();
        matrix.explored_fraction = if total == 0 {
            0.0
        } else {
            matrix.totals.explored as f64 / total as f64
        };
        matrix
    }
}

/// Narrows a cell listing or coverage view.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CellFilter {
    pub guideword: Option<GuideWord>,
    pub subject: Option<SubjectSelector>,
    pub shape: Option<SubjectShape>,
    pub status: Option<CellStatus>,
}

impl CellFilter {
    pub fn matches(&self, cell: &ExaminationCell, status: CellStatus) -> bool {
        self.guideword.is_none_or(|g| g == cell.guideword)
            && self.subject.as_ref().is_none_or(|s| s.matches(&cell.subject))
            && self.shape.is_none_or(|s| s == cell.subject.shape())
            && self.status.is_none_or(|s| s == status)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusTally {
    pub unexplored: usize,
    pub open: usize,
    pub explored: usize,
    pub deferred: usize,
    pub not_applicable: usize,
}

impl StatusTally {
    pub fn add(&mut self, status: CellStatus) {
        *self.slot(status) += 1;
    }

    fn slot(&mut self, status: CellStatus) -> &mut usize {
        match status {
            CellStatus::Unexplored => &mut self.unexplored,
            CellStatus::Open => &mut self.open,
            CellStatus::Explored => &mut self.explored,
            CellStatus::Deferred => &mut self.deferred,
            CellStatus::NotApplicable => &mut self.not_applicable,
        }
    }

    pub fn count(&self, status: CellStatus) -> usize {
        match status {
            CellStatus::Unexplored => self.unexplored,
            CellStatus::Open => self.open,
            CellStatus::Explored => self.explored,
            CellStatus::Deferred => self.deferred,
            CellStatus::NotApplicable => self.not_applicable,
        }
    }

    pub fn total(&self) -> usize {
        self.unexplored + self.open + self.explored + self.deferred + self.not_applicable
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCoverage {
    pub cell: CellId,
    pub guideword: GuideWord,
    pub subject: String,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidewordTally {
    pub guideword: GuideWord,
    #[serde(flatten)]
    pub tally: StatusTally,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectTally {
    pub subject: String,
    #[serde(flatten)]
    pub tally: StatusTally,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    pub cells: Vec<CellCoverage>,
    pub by_guideword: Vec<GuidewordTally>,
    pub by_subject: Vec<SubjectTally>,
    pub totals: StatusTally,
    pub explored_fraction: f64,
}

/// An event that passed validation but has not been committed yet.
#[derive(Debug, Clone)]
pub struct Pending {
    event: SessionEvent,
    state: SessionState,
    outcome: Outcome,
}

impl Pending {
    pub fn event(&self) -> &SessionEvent {
        &self.event
    }

    pub fn outcome(&self) -> &Outcome {
        &self.outcome
    }
}

/// A live or replayed session: the study, its journal and the folded state.
#[derive(Debug, Clone)]
pub struct Session {
    study: StudyDocument,
    base_taxonomy: HazardTaxonomy,
    events: Vec<SessionEvent>,
    state: SessionState,
}

impl Session {
    /// Starts a session over `study`, enumerating its cells with `config`.
    pub fn start(
        study: StudyDocument,
        taxonomy: HazardTaxonomy,
        config: EnumerationConfig,
        at: DateTime<Utc>,
    ) -> Result<Self, SessionError> {
        let digest = study.digest();
        let state = SessionState::initial(study.system.clone(), config, taxonomy.clone(), digest.clone())?;
        let started = SessionEvent {
            seq: 1,
            at,
            payload: EventPayload::SessionStarted {
                study_digest: digest,
                config,
            },
        };
        Ok(Self {
            study,
            base_taxonomy: taxonomy,
            events: vec![started],
            state,
        })
    }

    /// Folds `events` into a session. The first event must be
    /// `SESSION_STARTED` with seq 1 and carry the digest of `study`.
    pub fn replay(
        study: StudyDocument,
        taxonomy: HazardTaxonomy,
        events: impl IntoIterator<Item = SessionEvent>,
    ) -> Result<Self, ReplayError> {
        let mut events = events.into_iter();
        let first = events.next().ok_or_else(|| ReplayError::Corrupt {
            seq: 1,
            reason: "journal has no events".into(),
        })?;
        if first.seq != 1 {
            return Err(ReplayError::Corrupt {
                seq: first.seq,
                reason: "first event must have seq 1".into(),
            });
        }
        let EventPayload::SessionStarted { study_digest, config } = &first.payload else {
            return Err(ReplayError::Corrupt {
                seq: 1,
                reason: format!(
                    "first event is {}, expected SESSION_STARTED",
                    first.payload.kind()
                ),
            });
        };
        let found = study.digest();
        if *study_digest != found {
            return Err(ReplayError::DigestMismatch {
                expected: study_digest.clone(),
                found,
            });
        }
        let state = SessionState::initial(study.system.clone(), *config, taxonomy.clone(), found)
            .map_err(|source| ReplayError::Rejected { seq: 1, source })?;
        let mut session = Self {
            study,
            base_taxonomy: taxonomy,
            events: vec![first],
            state,
        };
        for event in events {
            // A failed replay discards the session, so there is no need to
            // keep the state intact on error.
            session.check_sequence(&event)?;
            session
                .state
                .apply(&event.payload)
                .map_err(|source| ReplayError::Rejected {
                    seq: event.seq,
                    source,
                })?;
            session.state.last_seq = event.seq;
            session.events.push(event);
        }
        Ok(session)
    }

    /// Applies one already-journaled event, as replay does. On error the
    /// session is unchanged.
    pub fn apply_event(&mut self, event: SessionEvent) -> Result<Outcome, ReplayError> {
        self.check_sequence(&event)?;
        let mut next = self.state.clone();
        let outcome = next
            .apply(&event.payload)
            .map_err(|source| ReplayError::Rejected {
                seq: event.seq,
                source,
            })?;
        next.last_seq = event.seq;
        self.state = next;
        self.events.push(event);
        Ok(outcome)
    }

    fn check_sequence(&self, event: &SessionEvent) -> Result<(), ReplayError> {
        let expected = self.state.last_seq + 1;
        if event.seq != expected {
            return Err(ReplayError::Corrupt {
                seq: event.seq,
                reason: format!("expected seq {expected}"),
            });
        }
        if self.state.closed {
            return Err(ReplayError::Corrupt {
                seq: event.seq,
                reason: "event after SESSION_CLOSED".into(),
            });
        }
        if matches!(event.payload, EventPayload::SessionStarted { .. }) {
            return Err(ReplayError::Corrupt {
                seq: event.seq,
                reason: "SESSION_STARTED may only be the first event".into(),
            });
        }
        Ok(())
    }

    /// Validates `command` and computes the event it would append, without
    /// changing the session. Pair with [`Session::commit`] once the event is
    /// durable.
    pub fn prepare(&self, command: Command, at: DateTime<Utc>) -> Result<Pending, SessionError> {
        if self.state.closed {
            return Err(SessionError::Closed);
        }
        let payload = self.state.plan(command)?;
        let mut state = self.state.clone();
        let outcome = state.apply(&payload)?;
        state.last_seq += 1;
        Ok(Pending {
            event: SessionEvent {
                seq: state.last_seq,
                at,
                payload,
            },
            state,
            outcome,
        })
    }

    /// Commits a prepared event. Fails if the session moved on since
    /// `prepare`.
    pub fn commit(&mut self, pending: Pending) -> Result<Outcome, SessionError> {
        if pending.event.seq != self.state.last_seq + 1 {
            return Err(SessionError::InvalidArgument(format!(
                "stale command: prepared seq {} but session is at {}",
                pending.event.seq, self.state.last_seq
            )));
        }
        self.state = pending.state;
        self.events.push(pending.event);
        Ok(pending.outcome)
    }

    pub fn execute(&mut self, command: Command, at: DateTime<Utc>) -> Result<Outcome, SessionError> {
        let pending = self.prepare(command, at)?;
        self.commit(pending)
    }

    pub fn open_cell(
        &mut self,
        cell: impl Into<CellId>,
        at: DateTime<Utc>,
    ) -> Result<CellStatus, SessionError> {
        match self.execute(Command::OpenCell { cell: cell.into() }, at)? {
            Outcome::CellStatus { status, .. } => Ok(status),
            other => unreachable!("open_cell produced {other:?}"),
        }
    }

    pub fn record_finding(
        &mut self,
        draft: FindingDraft,
        at: DateTime<Utc>,
    ) -> Result<Finding, SessionError> {
        match self.execute(Command::RecordFinding(draft), at)? {
            Outcome::FindingRecorded { finding } => Ok(finding),
            other => unreachable!("record_finding produced {other:?}"),
        }
    }

    pub fn link_findings(
        &mut self,
        from: &str,
        to: &str,
        relation: Relation,
        note: &str,
        at: DateTime<Utc>,
    ) -> Result<FindingLink, SessionError> {
        let command = Command::LinkFindings {
            from: from.to_string(),
            to: to.to_string(),
            relation,
            note: note.to_string(),
        };
        match self.execute(command, at)? {
            Outcome::FindingLinked { link } => Ok(link),
            other => unreachable!("link_findings produced {other:?}"),
        }
    }

    pub fn mark_cell(
        &mut self,
        cell: impl Into<CellId>,
        status: CellStatus,
        at: DateTime<Utc>,
    ) -> Result<CellStatus, SessionError> {
        match self.execute(
            Command::MarkCell {
                cell: cell.into(),
                status,
            },
            at,
        )? {
            Outcome::CellStatus { status, .. } => Ok(status),
            other => unreachable!("mark_cell produced {other:?}"),
        }
    }

    pub fn register_hazard(
        &mut self,
        name: &str,
        description: &str,
        at: DateTime<Utc>,
    ) -> Result<HazardEntry, SessionError> {
        let command = Command::RegisterHazard {
            name: name.to_string(),
            description: description.to_string(),
        };
        match self.execute(command, at)? {
            Outcome::HazardRegistered { entry } => Ok(entry),
            other => unreachable!("register_hazard produced {other:?}"),
        }
    }

    pub fn study(&self) -> &StudyDocument {
        &self.study
    }

    /// The taxonomy the session started with, before any registrations.
    pub fn base_taxonomy(&self) -> &HazardTaxonomy {
        &self.base_taxonomy
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn coverage(&self) -> CoverageMatrix {
        self.state.coverage()
    }

    pub fn distinct_findings(&self) -> &[Finding] {
        self.state.findings()
    }
}
