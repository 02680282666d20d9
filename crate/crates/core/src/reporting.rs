//! Result tables, summaries and the traceability graph.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{GuideWord, SubjectSelector};
use crate::session::{Finding, Relation, SessionState};

pub const CSV_HEADER: [&str; 3] = ["Guide word", "Ethical hazard", "Notes"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Txt,
    Md,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "txt" | "text" => Ok(ReportFormat::Txt),
            "md" | "markdown" => Ok(ReportFormat::Md),
            other => Err(format!(
                "unknown report format `{other}` (expected csv, txt or md)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardRow {
    pub finding: String,
    pub guideword_label: String,
    pub hazard_label: String,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardTable {
    pub subject: String,
    pub subject_label: String,
    pub rows: Vec<HazardRow>,
}

impl HazardTable {
    pub fn title(&self) -> String {
        format!("Ethical hazards associated with {}", self.subject_label)
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Table label of a finding's hazard, starred when novel.
pub fn hazard_label(state: &SessionState, finding: &Finding) -> String {
    let label = state
        .taxonomy()
        .get(&finding.hazard)
        .map(|e| e.label.clone())
        .unwrap_or_else(|| capitalize(&finding.hazard));
    if finding.is_novel {
        format!("{label}*")
    } else {
        label
    }
}

/// Table label of a finding's guideword, e.g. `More + Autonomy`.
pub fn guideword_label(state: &SessionState, finding: &Finding) -> String {
    let cell = state
        .cell(&finding.cell)
        .expect("findings only reference enumerated cells");
    let mut label = cell.guideword.label().to_string();
    // Generic subjects are already named by their characteristic.
    if let (false, Some(c)) = (cell.subject.functions.is_empty(), &cell.subject.characteristic) {
        let name = state
            .model()
            .characteristic(c)
            .map(|c| c.display_name())
            .unwrap_or_else(|| c.clone());
        write!(label, " + {}", capitalize(&name)).unwrap();
    }
    label
}

fn row(state: &SessionState, finding: &Finding) -> HazardRow {
    HazardRow {
        finding: finding.id.clone(),
        guideword_label: guideword_label(state, finding),
        hazard_label: hazard_label(state, finding),
        notes: finding.notes.clone(),
    }
}

fn table_for(state: &SessionState, selector: &SubjectSelector) -> HazardTable {
    HazardTable {
        subject: selector.key(),
        subject_label: selector.label(state.model()),
        rows: state.findings_for(selector).map(|f| row(state, f)).collect(),
    }
}

/// The result table for one subject group (`Soc1`, `Cog1+Soc1` or a
/// characteristic id).
pub fn hazard_table(state: &SessionState, subject: &str) -> Result<HazardTable, ModelError> {
    let selector = SubjectSelector::resolve(state.model(), subject)?;
    if !state.cells().iter().any(|c| selector.matches(&c.subject)) {
        return Err(ModelError::UnknownSubject(subject.to_string()));
    }
    Ok(table_for(state, &selector))
}

/// One table per subject group that has findings, in enumeration order.
pub fn hazard_tables(state: &SessionState) -> Vec<HazardTable> {
    let mut groups: Vec<SubjectSelector> = Vec::new();
    for cell in state.cells() {
        let group = cell.subject.group();
        if !groups.contains(&group) {
            groups.push(group);
        }
    }
    groups
        .iter()
        .map(|g| table_for(state, g))
        .filter(|t| !t.rows.is_empty())
        .collect()
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(writer: csv::Writer<Vec<u8>>) -> String {
    let bytes = writer.into_inner().expect("in-memory csv flush");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

fn render_csv(table: &HazardTable) -> String {
    let mut w = csv_writer();
    w.write_record(CSV_HEADER).expect("in-memory csv write");
    for r in &table.rows {
        w.write_record([&r.guideword_label, &r.hazard_label, &r.notes])
            .expect("in-memory csv write");
    }
    finish(w)
}

fn render_txt(table: &HazardTable) -> String {
    let cells: Vec<[&str; 3]> = table
        .rows
        .iter()
        .map(|r| {
            [
                r.guideword_label.as_str(),
                r.hazard_label.as_str(),
                r.notes.as_str(),
            ]
        })
        .collect();
    let mut widths = CSV_HEADER.map(|h| h.chars().count());
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |fields: [&str; 3]| {
        let mut out = String::new();
        for (i, (field, width)) in fields.iter().zip(widths).enumerate() {
            if i == 2 {
                out.push_str(field);
            } else {
                write!(out, "{field:<width$}  ").unwrap();
            }
        }
        out.trim_end().to_string()
    };
    let mut out = format!("{}\n\n", table.title());
    out.push_str(&line(CSV_HEADER));
    out.push('\n');
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&line([&rule[0], &rule[1], &rule[2]]));
    out.push('\n');
    for row in cells {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|")
}

fn render_md(table: &HazardTable) -> String {
    let mut out = format!("### {}\n\n", table.title());
    out.push_str("| Guide word | Ethical hazard | Notes |\n|---|---|---|\n");
    for r in &table.rows {
        writeln!(
            out,
            "| {} | {} | {} |",
            md_escape(&r.guideword_label),
            md_escape(&r.hazard_label),
            md_escape(&r.notes)
        )
        .unwrap();
    }
    out
}

pub fn render_table(table: &HazardTable, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(table),
        ReportFormat::Txt => render_txt(table),
        ReportFormat::Md => render_md(table),
    }
}

/// Renders several tables as one document. CSV output gains a leading
/// `Subject` column; text formats stack titled sections.
pub fn render_tables(tables: &[HazardTable], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut w = csv_writer();
            let mut header = vec!["Subject"];
            header.extend(CSV_HEADER);
            w.write_record(&header).expect("in-memory csv write");
            for t in tables {
                for r in &t.rows {
                    w.write_record([&t.subject, &r.guideword_label, &r.hazard_label, &r.notes])
                        .expect("in-memory csv write");
                }
            }
            finish(w)
        }
        ReportFormat::Txt | ReportFormat::Md => tables
            .iter()
            .map(|t| render_table(t, format))
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

/// Renders the table for `subject`, or every table with findings when
/// `subject` is `all`.
pub fn render_report(
    state: &SessionState,
    subject: &str,
    format: ReportFormat,
) -> Result<String, ModelError> {
    if subject.trim().eq_ignore_ascii_case("all") {
        Ok(render_tables(&hazard_tables(state), format))
    } else {
        Ok(render_table(&hazard_table(state, subject)?, format))
    }
}

/// Long-form listing of every finding with its scenario, links and notes.
pub fn scenario_appendix(state: &SessionState) -> String {
    let mut out = String::from("# Scenario appendix\n");
    for f in state.findings() {
        write!(out, "\n## {} {} ({})\n\n", f.id, hazard_label(state, f), f.cell).unwrap();
        if !f.scenario.is_empty() {
            writeln!(out, "{}\n", f.scenario).unwrap();
        }
        if !f.notes.is_empty() {
            writeln!(out, "Notes: {}\n", f.notes).unwrap();
        }
        writeln!(out, "Classification: {:?}", f.classification).unwrap();
        for link in state.links_of(&f.id) {
            if link.from == f.id {
                writeln!(out, "- {} {}", link.relation, link.to).unwrap();
            } else {
                writeln!(out, "- {} {} (from)", link.relation, link.from).unwrap();
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidewordCount {
    pub guideword: GuideWord,
    pub findings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total_findings: usize,
    pub novel_findings: usize,
    pub per_hazard: BTreeMap<String, usize>,
    pub per_guideword: Vec<GuidewordCount>,
    pub link_count: usize,
    pub coverage_fraction: f64,
}

pub fn summary(state: &SessionState) -> Summary {
    let mut per_hazard = BTreeMap::new();
    let mut per_guideword = GuideWord::ALL.map(|g| GuidewordCount {
        guideword: g,
        findings: 0,
    });
    for f in state.findings() {
        *per_hazard.entry(f.hazard.clone()).or_insert(0) += 1;
        if let Some(cell) = state.cell(&f.cell) {
            per_guideword[cell.guideword.index()].findings += 1;
        }
    }
    Summary {
        total_findings: state.findings().len(),
        novel_findings: state.findings().iter().filter(|f| f.is_novel).count(),
        per_hazard,
        per_guideword: per_guideword.to_vec(),
        link_count: state.links().len(),
        coverage_fraction: state.coverage().explored_fraction,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceNode {
    pub id: String,
    pub hazard: String,
    pub cell: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEdge {
    pub from: String,
    pub to: String,
    pub relation: Relation,
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceGraph {
    pub nodes: Vec<TraceNode>,
    pub edges: Vec<TraceEdge>,
}

pub fn trace_graph(state: &SessionState) -> TraceGraph {
    TraceGraph {
        nodes: state
            .findings()
            .iter()
            .map(|f| TraceNode {
                id: f.id.clone(),
                hazard: f.hazard.clone(),
                cell: f.cell.to_string(),
                label: format!("{} @ {}", hazard_label(state, f), f.cell),
            })
            .collect(),
        edges: state
            .links()
            .iter()
            .map(|l| TraceEdge {
                from: l.from.clone(),
                to: l.to.clone(),
                relation: l.relation,
                note: l.note.clone(),
            })
            .collect(),
    }
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl TraceGraph {
    /// Trivial Graph Format: `id label` node lines, a `#` separator, then
    /// `from to relation` edge lines.
    pub fn to_tgf(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            writeln!(out, "{} {}", n.id, n.label).unwrap();
        }
        out.push_str("#\n");
        for e in &self.edges {
            writeln!(out, "{} {} {}", e.from, e.to, e.relation).unwrap();
        }
        out
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph ehazop {\n");
        for n in &self.nodes {
            writeln!(
                out,
                "  {} [label={}];",
                dot_quote(&n.id),
                dot_quote(&format!("{}: {}", n.id, n.label))
            )
            .unwrap();
        }
        for e in &self.edges {
            writeln!(
                out,
                "  {} -> {} [label={}];",
                dot_quote(&e.from),
                dot_quote(&e.to),
                dot_quote(&e.relation.to_string())
            )
            .unwrap();
        }
        out.push_str("}\n");
        out
    }
}
