//! Regenerates `fixtures/ari-case-study.journal` from the Ari workshop
//! record.
//!
//! ```text
//! cargo run -p ehazop-core --example build_case_study -- crates/core/fixtures/ari-case-study.journal
//! ```

use chrono::{DateTime, Duration, TimeZone, Utc};
use ehazop_core::formats::Journal;
use ehazop_core::session::{CellStatus, Classification, FindingDraft, Relation};
use ehazop_core::{fixtures, HazardTaxonomy, Session};

struct Clock(DateTime<Utc>);

impl Clock {
    fn tick(&mut self) -> DateTime<Utc> {
        self.0 += Duration::minutes(2);
        self.0
    }
}

fn finding(cell: &str, hazard: &str, notes: &str, scenario: &str) -> FindingDraft {
    FindingDraft::new(cell, hazard).notes(notes).scenario(scenario)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| fixtures::case_study_journal_path().display().to_string());
    let study = fixtures::ari_study();
    let config = study.enumeration_config;
    let mut clock = Clock(Utc.with_ymd_and_hms(2024, 5, 14, 10, 0, 0).unwrap());
    let mut s = Session::start(study, HazardTaxonomy::base_catalog(), config, clock.0)?;
    use Classification::{Complex, Simple};

    // Soc1 under MORE
    s.open_cell("MORE/Soc1", clock.tick())?;
    for (hazard, notes, scenario) in [
        (
            "Lack of privacy",
            "The user's privacy is compromised by Ari's monitoring",
            "The user objects to any facial monitoring at all.",
        ),
        (
            "Lack of informed consent",
            "The user did not consent to monitoring by Ari, or has forgotten this",
            "The user never understood that Ari watches their face, or stopped noticing over time.",
        ),
        (
            "Loss of human autonomy",
            "The user loses ability to set up or initiate video calls autonomously",
            "Ari always places the calls, so the user's skill and initiative to call family fade.",
        ),
        (
            "Loss of human control",
            "The user temporarily loses ability to concentrate or focus due to repeated interruptions",
            "Ari keeps interrupting a tedious but demanding task the user is trying to finish.",
        ),
    ] {
        s.record_finding(
            finding("MORE/Soc1", hazard, notes, scenario).classification(Simple),
            clock.tick(),
        )?;
    }
    for (hazard, notes, scenario) in [
        ("Dehumanisation", "The user begins to consider their own facial expressions problematic",
         "Ari keeps reacting to the user's expressions as if they signal a problem."),
        ("Robot addiction", "The user begins to prefer interacting with Ari to other people, as a result of these interruptions",
         "The interruptions read as care, and Ari becomes preferred company over people."),
    ] {
        s.record_finding(finding("MORE/Soc1", hazard, notes, scenario).classification(Complex), clock.tick())?;
    }
    s.register_hazard(
        "Erosion of confidence",
        "The user doubts their own feelings because of the robot's inferences",
        clock.tick(),
    )?;
    s.record_finding(
        finding(
            "MORE/Soc1",
            "Erosion of confidence",
            "The user begins to question their own desires and feelings based on Ari's prompts",
            "Ari wrongly decides the user is bored; trusting Ari, the user comes to believe they are lonely.",
        )
        .classification(Complex),
        clock.tick(),
    )?;
    s.mark_cell("MORE/Soc1", CellStatus::Explored, clock.tick())?;

    s.open_cell("MORE/Soc1/autonomy", clock.tick())?;
    s.record_finding(
        finding(
            "MORE/Soc1/autonomy",
            "Deception",
            "The user believes Ari is monitoring them when it is not",
            "Ari acts more autonomously than the user realises and learns when monitoring is wanted.",
        ),
        clock.tick(),
    )?;
    s.mark_cell("MORE/Soc1/autonomy", CellStatus::Explored, clock.tick())?;

    s.open_cell("LESS/Soc1/autonomy", clock.tick())?;
    s.execute(
        ehazop_core::Command::AddNote {
            target: Some("LESS/Soc1/autonomy".into()),
            text: "Scenarios repeated hazards already recorded for Soc1; nothing new recorded.".into(),
        },
        clock.tick(),
    )?;
    s.mark_cell("LESS/Soc1/autonomy", CellStatus::Explored, clock.tick())?;

    // Soc1 under OPPOSITE
    s.open_cell("OPPOSITE/Soc1", clock.tick())?;
    s.record_finding(
        finding(
            "OPPOSITE/Soc1",
            "Loss of trust",
            "The user no longer trusts Ari for this or other functions.",
            "Ari does the reverse of what is expected, and the user disengages from every function.",
        ),
        clock.tick(),
    )?;
    s.record_finding(
        finding(
            "OPPOSITE/Soc1",
            "Lack of respect for cultural diversity and pluralism",
            "The user's culture does not align with the social expectations Ari facilitates",
            "The user observes a custom of temporary seclusion and is urged to socialise during it.",
        ),
        clock.tick(),
    )?;
    s.register_hazard(
        "Lack of associative control",
        "The robot reshapes the user's mental associations with an activity",
        clock.tick(),
    )?;
    s.record_finding(
        finding(
            "OPPOSITE/Soc1",
            "Lack of associative control",
            "The user's mental associations with socialising alter as a result of the Ari interactions",
            "Socialising is offered as a fix for boredom, so the user starts linking it with negative states.",
        ),
        clock.tick(),
    )?;
    s.mark_cell("OPPOSITE/Soc1", CellStatus::Explored, clock.tick())?;

    // Coa1
    s.open_cell("MORE/Coa1", clock.tick())?;
    for (hazard, notes, scenario) in [
        ("Lack of privacy", "The user's privacy is compromised by Ari's monitoring of movement",
         "The user objects to any monitoring of their movement."),
        ("Lack of informed consent", "The user did not consent to monitoring of movement by Ari, or has forgotten this",
         "The user forgets or misunderstands that their movement is tracked."),
        ("Loss of human autonomy", "The user loses ability to recognise body cues for exercise, or to perform these without coaching",
         "The user stops noticing stiffness and can no longer stretch without being coached."),
        ("Loss of human control", "The user loses ability to concentrate or focus due to repeated interruptions",
         "Coaching prompts break up a task that needs stillness, such as meditation."),
    ] {
        s.record_finding(finding("MORE/Coa1", hazard, notes, scenario).classification(Simple), clock.tick())?;
    }
    s.open_cell("OPPOSITE/Coa1", clock.tick())?;
    s.record_finding(
        finding(
            "OPPOSITE/Coa1",
            "Lack of respect for cultural diversity and pluralism",
            "The user's culture does not align with the values around movement that Ari facilitates",
            "The user's culture values stillness, and the coaching pushes movement instead.",
        ),
        clock.tick(),
    )?;
    s.mark_cell("OPPOSITE/Coa1", CellStatus::Explored, clock.tick())?;
    s.record_finding(
        finding(
            "MORE/Coa1",
            "Inappropriate trust (deception)",
            "The user begins to trust Ari to facilitate wider medical activities",
            "The user credits Ari with more medical authority than it has.",
        ),
        clock.tick(),
    )?;
    s.record_finding(
        finding(
            "MORE/Coa1",
            "Dehumanisation",
            "The user begins to see Ari as an authority figure",
            "Long coaching sessions lead a vulnerable user to defer to Ari.",
        ),
        clock.tick(),
    )?;
    s.mark_cell("MORE/Coa1", CellStatus::Explored, clock.tick())?;

    // Physical design, applied to every function at once
    for (cell, hazard, notes, scenario, distinct) in [
        (
            "MORE/*/physical_design",
            "Dehumanisation",
            "The user begins to see Ari as an authority figure due to its physical size",
            "Ari is bigger than expected and comes across as an authority.",
            false,
        ),
        (
            "LESS/*/physical_design",
            "Deception",
            "The user does not engage seriously with Ari due to its physical size",
            "Ari is smaller than expected, is treated as a toy, and its complex functions go unused.",
            false,
        ),
        (
            "OPPOSITE/*/physical_design",
            "Deception",
            "The user expects Ari to possess different capability",
            "Sensors are not where the eyes and ears suggest, and the arms imply dexterity Ari lacks.",
            true,
        ),
    ] {
        s.open_cell(cell, clock.tick())?;
        let mut draft = finding(cell, hazard, notes, scenario);
        if distinct {
            draft = draft.distinct();
        }
        s.record_finding(draft, clock.tick())?;
        s.mark_cell(cell, CellStatus::Explored, clock.tick())?;
    }

    for (from, to, relation, note) in [
        (
            "F17",
            "F18",
            Relation::LeadsTo,
            "Misplaced medical authority feeds deference to the robot",
        ),
        (
            "F07",
            "F17",
            Relation::Related,
            "Both rest on the user over-trusting the robot's judgement",
        ),
        (
            "F07",
            "F05",
            Relation::Related,
            "Doubting one's own feelings and expressions",
        ),
        (
            "F18",
            "F19",
            Relation::Related,
            "Authority-figure perception, from coaching and from size",
        ),
        (
            "F21",
            "F20",
            Relation::PresentsAs,
            "Same hazard presenting differently under OPPOSITE",
        ),
    ] {
        s.link_findings(from, to, relation, note, clock.tick())?;
    }
    s.execute(ehazop_core::Command::CloseSession, clock.tick())?;

    std::fs::write(&out, Journal::from_session(&s).to_text())?;
    eprintln!("wrote {} events to {out}", s.events().len());
    Ok(())
}
