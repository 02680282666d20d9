//! Test support: proptest strategies for models and command scripts, plus
//! a brute-force cell-count oracle. Enabled by the `testing` feature.

use std::collections::BTreeSet;

use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;

use crate::formats::StudyDocument;
use crate::model::{
    Characteristic, CharacteristicKind, EnumerationConfig, FunctionClass, FunctionSpec, SystemModel,
};
use crate::session::{CellStatus, Classification, Command, FindingDraft, Relation, Session};
use crate::taxonomy::HazardTaxonomy;

/// Counts cells by walking every candidate (guideword, function subset,
/// optional characteristic) and keeping the ones the config admits. It
/// shares no code with the enumerator.
pub fn brute_force_cell_count(functions: usize, characteristics: usize, config: &EnumerationConfig) -> usize {
    let mut count = 0;
    for _guideword in 0..7 {
        for mask in 0u32..(1 << functions) {
            let arity = mask.count_ones();
            for characteristic in 0..=characteristics {
                let has_char = characteristic > 0;
                let admitted = match (arity, has_char) {
                    (1, false) => config.include_single_functions,
                    (2, false) => config.include_function_pairs,
                    (1, true) => config.include_function_characteristic,
                    (0, true) => config.include_generic_characteristic,
                    _ => false,
                };
                if admitted {
                    count += 1;
                }
            }
        }
    }
    count
}

pub fn all_configs() -> Vec<EnumerationConfig> {
    (0u8..16)
        .map(|bits| EnumerationConfig {
            include_single_functions: bits & 1 != 0,
            include_function_pairs: bits & 2 != 0,
            include_function_characteristic: bits & 4 != 0,
            include_generic_characteristic: bits & 8 != 0,
        })
        .collect()
}

pub fn model_with(functions: usize, characteristics: usize) -> SystemModel {
    let kinds = [
        CharacteristicKind::PhysicalDesign,
        CharacteristicKind::Autonomy,
        CharacteristicKind::NonFunctional,
    ];
    let classes = [
        FunctionClass::Cognitive,
        FunctionClass::Social,
        FunctionClass::Coach,
        FunctionClass::Other,
    ];
    SystemModel {
        name: "Generated".into(),
        functions: (0..functions)
            .map(|i| FunctionSpec {
                id: format!("Fn{i}"),
                class: classes[i % classes.len()],
                description: format!("generated function {i}"),
            })
            .collect(),
        characteristics: (0..characteristics)
            .map(|i| Characteristic {
                id: format!("char_{i}"),
                kind: kinds[i % kinds.len()],
                description: format!("generated characteristic {i}"),
            })
            .collect(),
    }
}

pub fn arb_config() -> impl Strategy<Value = EnumerationConfig> {
    (any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>())
        .prop_map(|(a, b, c, d)| EnumerationConfig {
            include_single_functions: a,
            include_function_pairs: b,
            include_function_characteristic: c,
            include_generic_characteristic: d,
        })
        .prop_filter("at least one flag", |c| c.validate().is_ok())
}

/// Hazard names scripts draw from: the base catalog plus names that only
/// resolve after registration.
pub const HAZARD_POOL: [&str; 13] = [
    "lack of privacy",
    "Lack of informed consent",
    "loss of human autonomy",
    "dehumanisation",
    "Deception",
    "loss of trust",
    "inappropriate trust (deception)",
    "robot addiction",
    "lack of respect for cultural diversity and pluralism",
    "Erosion of confidence",
    "lack of associative control*",
    "novel hazard alpha",
    "novel hazard beta",
];

/// Index-based command whose ids are resolved against the session state at
/// the moment it runs, so scripts stay meaningful as the state evolves.
#[derive(Debug, Clone)]
pub enum CommandSeed {
    Open {
        cell: usize,
    },
    Record {
        cell: usize,
        hazard: usize,
        distinct: bool,
        class: usize,
    },
    Link {
        from: usize,
        to: usize,
        relation: usize,
    },
    Mark {
        cell: usize,
        status: usize,
    },
    Register {
        hazard: usize,
    },
    Note {
        cell: Option<usize>,
    },
    Close,
}

fn arb_seed() -> impl Strategy<Value = CommandSeed> {
    let ix = 0usize..64;
    prop_oneof![
        2 => ix.clone().prop_map(|cell| CommandSeed::Open { cell }),
        8 => (ix.clone(), 0..HAZARD_POOL.len(), prop::bool::weighted(0.2), 0usize..3)
            .prop_map(|(cell, hazard, distinct, class)| CommandSeed::Record { cell, hazard, distinct, class }),
        2 => (ix.clone(), ix.clone(), 0usize..4)
            .prop_map(|(from, to, relation)| CommandSeed::Link { from, to, relation }),
        2 => (ix.clone(), 0usize..5).prop_map(|(cell, status)| CommandSeed::Mark { cell, status }),
        2 => (0..HAZARD_POOL.len()).prop_map(|hazard| CommandSeed::Register { hazard }),
        1 => prop::option::of(ix).prop_map(|cell| CommandSeed::Note { cell }),
        1 => Just(CommandSeed::Close),
    ]
}

impl CommandSeed {
    pub fn realize(&self, session: &Session) -> Command {
        let state = session.state();
        let cells = state.cells();
        let cell = |i: usize| cells[i % cells.len()].id.clone();
        // One slot past the end yields a dangling finding id.
        let finding = |i: usize| crate::session::finding_id(i % (state.findings().len() + 1) + 1);
        match *self {
            CommandSeed::Open { cell: c } => Command::OpenCell { cell: cell(c) },
            CommandSeed::Record {
                cell: c,
                hazard,
                distinct,
                class,
            } => {
                let mut draft = FindingDraft::new(cell(c), HAZARD_POOL[hazard])
                    .notes(format!("note {c}"))
                    .scenario(format!("scenario {c}/{hazard}"))
                    .classification(
                        [
                            Classification::Simple,
                            Classification::Complex,
                            Classification::Unclassified,
                        ][class],
                    );
                if distinct {
                    draft = draft.distinct();
                }
                Command::RecordFinding(draft)
            }
            CommandSeed::Link { from, to, relation } => Command::LinkFindings {
                from: finding(from),
                to: finding(to),
                relation: [
                    Relation::Reinforces,
                    Relation::LeadsTo,
                    Relation::PresentsAs,
                    Relation::Related,
                ][relation],
                note: String::new(),
            },
            CommandSeed::Mark { cell: c, status } => Command::MarkCell {
                cell: cell(c),
                status: CellStatus::ALL[status],
            },
            CommandSeed::Register { hazard } => Command::RegisterHazard {
                name: HAZARD_POOL[hazard].to_string(),
                description: String::new(),
            },
            CommandSeed::Note { cell: c } => Command::AddNote {
                target: c.map(|c| cell(c).to_string()),
                text: "note".into(),
            },
            CommandSeed::Close => Command::CloseSession,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Script {
    pub study: StudyDocument,
    pub config: EnumerationConfig,
    pub seeds: Vec<CommandSeed>,
}

/// Small random studies with command scripts of up to `max_len` commands.
pub fn arb_script(max_len: usize) -> impl Strategy<Value = Script> {
    (
        1usize..=4,
        0usize..=2,
        arb_config(),
        prop::collection::vec(arb_seed(), 0..=max_len),
    )
        .prop_filter_map("config enumerates no cells", |(f, ch, config, seeds)| {
            let model = model_with(f, ch);
            let cells = crate::model::enumerate_cells(&model, &config).ok()?;
            (!cells.is_empty()).then(|| Script {
                study: StudyDocument::new(model, config),
                config,
                seeds,
            })
        })
}

/// Like [`arb_script`], but the session is only ever closed by the last
/// command, so every command in between has a chance to be accepted.
pub fn arb_workshop_script(max_len: usize) -> impl Strategy<Value = Script> {
    arb_script(max_len).prop_map(|mut script| {
        let closes = script.seeds.iter().any(|s| matches!(s, CommandSeed::Close));
        script.seeds.retain(|s| !matches!(s, CommandSeed::Close));
        if closes {
            script.seeds.push(CommandSeed::Close);
        }
        script
    })
}

pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 1, 9, 0, 0).unwrap()
}

/// Runs a script through the command API. Rejected commands append nothing.
/// Returns the session and the number of rejections.
pub fn run_script(script: &Script) -> (Session, usize) {
    let mut session = Session::start(
        script.study.clone(),
        HazardTaxonomy::base_catalog(),
        script.config,
        epoch(),
    )
    .expect("generated studies are valid");
    let mut rejected = 0;
    for (i, seed) in script.seeds.iter().enumerate() {
        let command = seed.realize(&session);
        let at = epoch() + Duration::seconds(i as i64 + 1);
        if session.execute(command, at).is_err() {
            rejected += 1;
        }
    }
    (session, rejected)
}

/// Function ids referenced by a subject, or an empty set for generic ones.
pub fn scope_of(session: &Session, cell: &crate::model::CellId) -> BTreeSet<String> {
    session
        .state()
        .cell(cell)
        .map(|c| c.subject.functions.clone())
        .unwrap_or_default()
}
