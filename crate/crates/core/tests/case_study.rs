//! The bundled Ari workshop journal against the published result tables.

use ehazop_core::fixtures;
use ehazop_core::model::{EnumerationConfig, SubjectSelector, SubjectShape};
use ehazop_core::reporting::{self, render_table, ReportFormat};
use ehazop_core::session::{CellFilter, CellStatus};

fn count_subject(subject: &str) -> usize {
    let session = fixtures::case_study_session();
    let selector = SubjectSelector::resolve(session.state().model(), subject).unwrap();
    session.state().findings_for(&selector).count()
}

#[test]
fn journal_folds_to_21_findings_with_2_novel() {
    let session = fixtures::case_study_session();
    let findings = session.distinct_findings();
    assert_eq!(findings.len(), 21);
    let novel: Vec<_> = findings
        .iter()
        .filter(|f| f.is_novel)
        .map(|f| f.hazard.as_str())
        .collect();
    assert_eq!(novel, ["erosion of confidence", "lack of associative control"]);
}

#[test]
fn per_subject_counts_match_the_tables() {
    assert_eq!(count_subject("Soc1"), 11);
    assert_eq!(count_subject("Coa1"), 7);
    assert_eq!(count_subject("physical_design"), 3);
    assert_eq!(count_subject("Cog1"), 0);
}

#[test]
fn golden_csv_tables_are_reproduced() {
    let session = fixtures::case_study_session();
    for (subject, file) in [
        ("Soc1", "soc1.csv"),
        ("Coa1", "coa1.csv"),
        ("physical_design", "physical_design.csv"),
    ] {
        let table = reporting::hazard_table(session.state(), subject).unwrap();
        let golden = std::fs::read_to_string(fixtures::golden_path(file)).unwrap();
        assert_eq!(render_table(&table, ReportFormat::Csv), golden, "{file}");
    }
}

#[test]
fn soc1_row_8_is_more_plus_autonomy_deception() {
    let session = fixtures::case_study_session();
    let table = reporting::hazard_table(session.state(), "Soc1").unwrap();
    assert_eq!(table.subject_label, "Function Soc1");
    let row = &table.rows[7];
    assert_eq!(row.guideword_label, "More + Autonomy");
    assert_eq!(row.hazard_label, "Deception");
    assert_eq!(
        row.notes,
        "The user believes Ari is monitoring them when it is not"
    );
}

#[test]
fn coa1_has_inappropriate_trust_row() {
    let session = fixtures::case_study_session();
    let table = reporting::hazard_table(session.state(), "Coa1").unwrap();
    assert_eq!(table.rows.len(), 7);
    assert!(table
        .rows
        .iter()
        .any(|r| r.guideword_label == "More" && r.hazard_label == "Inappropriate trust (deception)"));
}

#[test]
fn cog1_table_is_empty_and_unknown_subject_errors() {
    let session = fixtures::case_study_session();
    assert!(reporting::hazard_table(session.state(), "Cog1")
        .unwrap()
        .rows
        .is_empty());
    assert!(reporting::hazard_table(session.state(), "Nav1").is_err());
    // pairs are not enumerated in the case study
    assert!(reporting::hazard_table(session.state(), "Cog1+Soc1").is_err());
}

#[test]
fn stars_appear_exactly_on_registered_hazards() {
    let session = fixtures::case_study_session();
    let state = session.state();
    for table in reporting::hazard_tables(state) {
        for row in &table.rows {
            let finding = state.finding(&row.finding).unwrap();
            let entry = state.taxonomy().get(&finding.hazard).unwrap();
            assert_eq!(
                row.hazard_label.ends_with('*'),
                entry.is_novel(),
                "{}",
                row.hazard_label
            );
        }
    }
}

#[test]
fn summary_matches_totals() {
    let session = fixtures::case_study_session();
    let summary = reporting::summary(session.state());
    assert_eq!(summary.total_findings, 21);
    assert_eq!(summary.novel_findings, 2);
    assert_eq!(summary.per_hazard["lack of privacy"], 2);
    assert_eq!(summary.per_hazard["deception"], 3);
    assert_eq!(summary.link_count, 5);
    let rows: usize = reporting::hazard_tables(session.state())
        .iter()
        .map(|t| t.rows.len())
        .sum();
    assert_eq!(rows, summary.total_findings);
    assert_eq!(
        summary.per_guideword.iter().map(|g| g.findings).sum::<usize>(),
        21
    );
    assert!((summary.coverage_fraction - 9.0 / 77.0).abs() < 1e-12);
}

#[test]
fn trace_graph_counts_follow_the_journal() {
    let session = fixtures::case_study_session();
    let graph = reporting::trace_graph(session.state());
    let text = std::fs::read_to_string(fixtures::case_study_journal_path()).unwrap();
    let linked = text
        .lines()
        .filter(|l| l.contains(r#""kind":"FINDING_LINKED""#))
        .count();
    assert_eq!(graph.nodes.len(), 21);
    assert_eq!(graph.edges.len(), linked);
    assert_eq!(graph.to_tgf().lines().count(), 21 + 1 + linked);
    assert!(graph
        .to_dot()
        .contains(r#""F21" -> "F20" [label="PRESENTS_AS"];"#));
}

#[test]
fn cog1_singles_view_is_unexplored() {
    let session = fixtures::case_study_session();
    let state = session.state();
    let filter = CellFilter {
        subject: Some(SubjectSelector::resolve(state.model(), "Cog1").unwrap()),
        shape: Some(SubjectShape::Function),
        ..CellFilter::default()
    };
    let view = state.coverage_where(&filter);
    assert_eq!(view.cells.len(), 7);
    assert_eq!(view.totals.unexplored, 7);
    let singles = state.coverage_where(&CellFilter {
        shape: Some(SubjectShape::Function),
        ..CellFilter::default()
    });
    assert_eq!(singles.cells.len(), 21);
    assert_eq!(state.config(), &EnumerationConfig::default());
}

#[test]
fn explored_cells_are_the_discussed_ones() {
    let session = fixtures::case_study_session();
    let explored: Vec<_> = session
        .state()
        .cell_statuses()
        .filter(|(_, s)| *s == CellStatus::Explored)
        .map(|(c, _)| c.id.to_string())
        .collect();
    assert_eq!(
        explored,
        [
            "MORE/Soc1",
            "MORE/Coa1",
            "MORE/Soc1/autonomy",
            "MORE/*/physical_design",
            "LESS/Soc1/autonomy",
            "LESS/*/physical_design",
            "OPPOSITE/Soc1",
            "OPPOSITE/Coa1",
            "OPPOSITE/*/physical_design",
        ]
    );
}

#[test]
fn text_and_markdown_renderings_are_stable() {
    let session = fixtures::case_study_session();
    let table = reporting::hazard_table(session.state(), "physical_design").unwrap();
    assert_eq!(
        render_table(&table, ReportFormat::Md),
        "### Ethical hazards associated with Ari physical design\n\n\
         | Guide word | Ethical hazard | Notes |\n|---|---|---|\n\
         | More | Dehumanisation | The user begins to see Ari as an authority figure due to its physical size |\n\
         | Less | Deception | The user does not engage seriously with Ari due to its physical size |\n\
         | Opposite | Deception | The user expects Ari to possess different capability |\n"
    );
    let txt = render_table(&table, ReportFormat::Txt);
    let lines: Vec<_> = txt.lines().collect();
    assert_eq!(lines[2], "Guide word  Ethical hazard  Notes");
    let note = "The user begins to see Ari as an authority figure due to its physical size";
    assert_eq!(
        lines[3],
        format!("----------  --------------  {}", "-".repeat(note.len()))
    );
    assert_eq!(lines[4], "More        Dehumanisation  The user begins to see Ari as an authority figure due to its physical size");
}
