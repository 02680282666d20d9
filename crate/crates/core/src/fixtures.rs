//! The bundled Ari case study: a study file, the workshop journal and the
//! golden result tables, shipped under `crates/core/fixtures/`.

use std::path::PathBuf;

use crate::formats::{self, StudyDocument};
use crate::session::Session;

pub fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn ari_study_path() -> PathBuf {
    dir().join("ari.study")
}

pub fn case_study_journal_path() -> PathBuf {
    dir().join("ari-case-study.journal")
}

pub fn golden_path(name: &str) -> PathBuf {
    dir().join("golden").join(name)
}

pub fn ari_study() -> StudyDocument {
    formats::load_study(ari_study_path()).expect("bundled Ari study loads")
}

/// The case-study session folded from the bundled journal.
pub fn case_study_session() -> Session {
    formats::replay_file(case_study_journal_path()).expect("bundled journal replays")
}
