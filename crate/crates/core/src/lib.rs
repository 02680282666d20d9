//! Engine for EHAZOP ethical-hazard studies of assistive robots.
//!
//! A study names the robot's functions and characteristics. The seven
//! guidewords applied to those subjects give the examination cells; each
//! cell has a what-if prompt. Workshop sessions record findings against
//! cells in an append-only journal, and every report (result tables,
//! coverage, the traceability graph) is computed from that journal.
//!
//! ```
//! use ehazop_core::model::{EnumerationConfig, GuideWord};
//! use ehazop_core::fixtures;
//!
//! let study = fixtures::ari_study();
//! let cells = ehazop_core::enumerate_cells(&study.system, &EnumerationConfig::singles_only()).unwrap();
//! assert_eq!(cells.len(), 21);
//! assert_eq!(cells[0].guideword, GuideWord::More);
//! ```

pub mod error;
pub mod fixtures;
pub mod formats;
pub mod model;
pub mod prompts;
pub mod reporting;
pub mod session;
pub mod taxonomy;

pub use error::{FormatError, ModelError, PromptError, ReplayError, SessionError, TaxonomyError};
pub use formats::{load_study, Journal, JournalWriter, StudyDocument};
pub use model::{enumerate_cells, validate_model, CellId, ExaminationCell, GuideWord, Subject, SystemModel};
pub use prompts::{generate_prompt, TemplateSet};
pub use session::{Command, Finding, FindingDraft, Session, SessionEvent, SessionState};
pub use taxonomy::HazardTaxonomy;

#[cfg(feature = "testing")]
pub mod testing;
