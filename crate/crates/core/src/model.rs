//! Study vocabulary: guidewords, the system model under analysis, and the
//! examination-cell algebra.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// One of the seven fixed deviation prompts.
///
/// Declaration order is the catalog order and drives enumeration order, so
/// the derived `Ord` is meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GuideWord {
    More,
    Less,
    Early,
    Late,
    Opposite,
    InAddition,
    Never,
}

impl GuideWord {
    pub const ALL: [GuideWord; 7] = [
        GuideWord::More,
        GuideWord::Less,
        GuideWord::Early,
        GuideWord::Late,
        GuideWord::Opposite,
        GuideWord::InAddition,
        GuideWord::Never,
    ];

    /// Identifier used in cell ids and files, e.g. `IN_ADDITION`.
    pub fn id(self) -> &'static str {
        match self {
            GuideWord::More => "MORE",
            GuideWord::Less => "LESS",
            GuideWord::Early => "EARLY",
            GuideWord::Late => "LATE",
            GuideWord::Opposite => "OPPOSITE",
            GuideWord::InAddition => "IN_ADDITION",
            GuideWord::Never => "NEVER",
        }
    }

    /// Title-case label as printed in result tables ("More", "In addition").
    pub fn label(self) -> &'static str {
        match self {
            GuideWord::More => "More",
            GuideWord::Less => "Less",
            GuideWord::Early => "Early",
            GuideWord::Late => "Late",
            GuideWord::Opposite => "Opposite",
            GuideWord::InAddition => "In addition",
            GuideWord::Never => "Never",
        }
    }

    /// Form used inside what-if prompts. EARLY and LATE take the comparative.
    pub fn prompt_form(self) -> &'static str {
        match self {
            GuideWord::More => "MORE",
            GuideWord::Less => "LESS",
            GuideWord::Early => "EARLIER",
            GuideWord::Late => "LATER",
            GuideWord::Opposite => "OPPOSITE",
            GuideWord::InAddition => "IN ADDITION",
            GuideWord::Never => "NEVER",
        }
    }

    pub fn definition(self) -> &'static str {
        match self {
            GuideWord::More => "This characteristic or function of the robot is more or increased from that expected by the user",
            GuideWord::Less => "This characteristic or function of the robot is less or diminished from that expected by the user",
            GuideWord::Early => "This characteristic or function of the robot occurs or is encountered earlier than the user expects",
            GuideWord::Late => "This characteristic or function of the robot occurs or is encountered later than the user expects",
            GuideWord::Opposite => "This characteristic or function of the robot is the opposite of that expected by the user",
            GuideWord::InAddition => "This characteristic or function of the robot is performed or encountered in addition to a different one expected by the user",
            GuideWord::Never => "This characteristic or function of the robot is not performed or encountered despite being expected by the user",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for GuideWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for GuideWord {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase().replace([' ', '-'], "_");
        GuideWord::ALL
            .into_iter()
            .find(|g| g.id() == upper)
            .ok_or_else(|| ModelError::UnknownGuideWord(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FunctionClass {
    Cognitive,
    Social,
    Coach,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CharacteristicKind {
    NonFunctional,
    PhysicalDesign,
    Autonomy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub id: String,
    pub class: FunctionClass,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Characteristic {
    pub id: String,
    pub kind: CharacteristicKind,
    pub description: String,
}

impl Characteristic {
    /// Human-readable name derived from the id: `physical_design` reads as
    /// "physical design".
    pub fn display_name(&self) -> String {
        self.id.replace('_', " ")
    }
}

/// The robot under analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemModel {
    pub name: String,
    pub functions: Vec<FunctionSpec>,
    #[serde(default)]
    pub characteristics: Vec<Characteristic>,
}

impl SystemModel {
    pub fn function(&self, id: &str) -> Option<&FunctionSpec> {
        self.functions.iter().find(|f| f.id == id)
    }

    pub fn characteristic(&self, id: &str) -> Option<&Characteristic> {
        self.characteristics.iter().find(|c| c.id == id)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_model(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Violation {
    MissingFunctions,
    EmptyName,
    DuplicateId { id: String },
    MalformedId { id: String },
    EmptyDescription { id: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingFunctions => f.write_str("model declares no functions"),
            Violation::EmptyName => f.write_str("model name is empty"),
            Violation::DuplicateId { id } => write!(f, "duplicate id `{id}`"),
            Violation::MalformedId { id } => {
                write!(f, "malformed id `{id}` (use letters, digits, `_`, `-` or `.`)")
            }
            Violation::EmptyDescription { id } => write!(f, "`{id}` has an empty description"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Ids must survive the `GUIDEWORD/functions/characteristic` cell id format.
pub(crate) fn is_well_formed_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// Checks every model invariant. Violations are data; the report is empty
/// iff the model is valid.
pub fn validate_model(model: &SystemModel) -> ValidationReport {
    let mut violations = Vec::new();
    if model.name.trim().is_empty() {
        violations.push(Violation::EmptyName);
    }
    if model.functions.is_empty() {
        violations.push(Violation::MissingFunctions);
    }

    // Function and characteristic ids share one namespace.
    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    let entries = model
        .functions
        .iter()
        .map(|f| (&f.id, &f.description))
        .chain(model.characteristics.iter().map(|c| (&c.id, &c.description)));
    for (id, description) in entries {
        if !is_well_formed_id(id) {
            violations.push(Violation::MalformedId { id: id.clone() });
        }
        if !seen.insert(id.as_str()) && reported.insert(id.as_str()) {
            violations.push(Violation::DuplicateId { id: id.clone() });
        }
        if description.trim().is_empty() {
            violations.push(Violation::EmptyDescription { id: id.clone() });
        }
    }
    ValidationReport { violations }
}

/// Which parts of the guideword × subject space to enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct EnumerationConfig {
    pub include_single_functions: bool,
    pub include_function_pairs: bool,
    pub include_function_characteristic: bool,
    pub include_generic_characteristic: bool,
}

impl Default for EnumerationConfig {
    fn default() -> Self {
        Self {
            include_single_functions: true,
            include_function_pairs: false,
            include_function_characteristic: true,
            include_generic_characteristic: true,
        }
    }
}

impl EnumerationConfig {
    pub fn singles_only() -> Self {
        Self {
            include_single_functions: true,
            include_function_pairs: false,
            include_function_characteristic: false,
            include_generic_characteristic: false,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.include_single_functions
            || self.include_function_pairs
            || self.include_function_characteristic
            || self.include_generic_characteristic
        {
            Ok(())
        } else {
            Err(ModelError::EmptyConfig)
        }
    }
}

/// What a guideword is applied to.
///
/// An empty function set with a characteristic is a generic characteristic
/// subject: it stands for the characteristic across every function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Subject {
    pub functions: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub characteristic: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubjectShape {
    Function,
    FunctionSet,
    FunctionPlusCharacteristic,
    GenericCharacteristic,
}

impl SubjectShape {
    pub const ALL: [SubjectShape; 4] = [
        SubjectShape::Function,
        SubjectShape::FunctionSet,
        SubjectShape::FunctionPlusCharacteristic,
        SubjectShape::GenericCharacteristic,
    ];
}

impl Subject {
    pub fn function<S: Into<String>>(id: S) -> Self {
        Self {
            functions: BTreeSet::from([id.into()]),
            characteristic: None,
        }
    }

    pub fn functions<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            functions: ids.into_iter().map(Into::into).collect(),
            characteristic: None,
        }
    }

    pub fn with_characteristic<S: Into<String>>(mut self, id: S) -> Self {
        self.characteristic = Some(id.into());
        self
    }

    pub fn generic<S: Into<String>>(characteristic: S) -> Self {
        Self {
            functions: BTreeSet::new(),
            characteristic: Some(characteristic.into()),
        }
    }

    pub fn is_generic(&self) -> bool {
        self.functions.is_empty() && self.characteristic.is_some()
    }

    pub fn is_degenerate(&self) -> bool {
        self.functions.is_empty() && self.characteristic.is_none()
    }

    pub fn shape(&self) -> SubjectShape {
        match (self.functions.len(), &self.characteristic) {
            (0, _) => SubjectShape::GenericCharacteristic,
            (_, Some(_)) => SubjectShape::FunctionPlusCharacteristic,
            (1, None) => SubjectShape::Function,
            (_, None) => SubjectShape::FunctionSet,
        }
    }

    /// The function slot of a cell id: sorted ids joined by `+`, or `*`.
    pub fn function_slot(&self) -> String {
        if self.functions.is_empty() {
            "*".to_string()
        } else {
            self.functions.iter().cloned().collect::<Vec<_>>().join("+")
        }
    }

    /// The subject group this subject reports under: its function set, or
    /// the characteristic for generic subjects.
    pub fn group(&self) -> SubjectSelector {
        if self.functions.is_empty() {
            SubjectSelector::Characteristic(self.characteristic.clone().unwrap_or_default())
        } else {
            SubjectSelector::Functions(self.functions.clone())
        }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.function_slot())?;
        if let Some(c) = &self.characteristic {
            write!(f, "/{c}")?;
        }
        Ok(())
    }
}

/// Selects a subject group: a function set (with or without characteristic)
/// or a generic characteristic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubjectSelector {
    Functions(BTreeSet<String>),
    Characteristic(String),
}

impl SubjectSelector {
    /// Parses `Soc1`, `Cog1+Soc1` or a characteristic id, resolved against
    /// the model.
    pub fn resolve(model: &SystemModel, text: &str) -> Result<Self, ModelError> {
        let text = text.trim();
        let text = text.strip_prefix("*/").unwrap_or(text);
        if let Some(c) = model.characteristic(text) {
            return Ok(SubjectSelector::Characteristic(c.id.clone()));
        }
        let ids: BTreeSet<String> = text.split('+').map(|s| s.trim().to_string()).collect();
        if ids.iter().all(|id| model.function(id).is_some()) {
            Ok(SubjectSelector::Functions(ids))
        } else {
            Err(ModelError::UnknownSubject(text.to_string()))
        }
    }

    pub fn matches(&self, subject: &Subject) -> bool {
        match self {
            SubjectSelector::Functions(ids) => &subject.functions == ids,
            SubjectSelector::Characteristic(c) => {
                subject.functions.is_empty() && subject.characteristic.as_deref() == Some(c)
            }
        }
    }

    pub fn key(&self) -> String {
        match self {
            SubjectSelector::Functions(ids) => ids.iter().cloned().collect::<Vec<_>>().join("+"),
            SubjectSelector::Characteristic(c) => c.clone(),
        }
    }

    pub fn label(&self, model: &SystemModel) -> String {
        match self {
            SubjectSelector::Functions(ids) if ids.len() == 1 => {
                format!("Function {}", self.key())
            }
            SubjectSelector::Functions(ids) => {
                format!(
                    "Functions {}",
                    ids.iter().cloned().collect::<Vec<_>>().join(" + ")
                )
            }
            SubjectSelector::Characteristic(c) => {
                let name = model
                    .characteristic(c)
                    .map(Characteristic::display_name)
                    .unwrap_or_else(|| c.clone());
                format!("{} {}", model.name, name)
            }
        }
    }
}

impl fmt::Display for SubjectSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Stable identifier of an examination cell, e.g. `MORE/Soc1/autonomy`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(String);

impl CellId {
    pub fn new(guideword: GuideWord, subject: &Subject) -> Self {
        CellId(format!("{}/{}", guideword.id(), subject))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Splits the id back into its guideword and subject.
    pub fn parse(&self) -> Result<(GuideWord, Subject), ModelError> {
        let bad = || ModelError::MalformedCellId(self.0.clone());
        let mut parts = self.0.split('/');
        let guideword = parts.next().ok_or_else(bad)?;
        let guideword = GuideWord::ALL
            .into_iter()
            .find(|g| g.id() == guideword)
            .ok_or_else(bad)?;
        let functions = parts.next().ok_or_else(bad)?;
        let characteristic = parts.next().map(str::to_string);
        if parts.next().is_some() {
            return Err(bad());
        }
        let functions: BTreeSet<String> = if functions == "*" {
            BTreeSet::new()
        } else {
            functions.split('+').map(str::to_string).collect()
        };
        if functions.iter().any(|f| !is_well_formed_id(f))
            || characteristic.as_deref().is_some_and(|c| !is_well_formed_id(c))
        {
            return Err(bad());
        }
        let subject = Subject {
            functions,
            characteristic,
        };
        if subject.is_degenerate() {
            return Err(bad());
        }
        Ok((guideword, subject))
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CellId {
    fn from(s: &str) -> Self {
        CellId(s.to_string())
    }
}

impl From<String> for CellId {
    fn from(s: String) -> Self {
        CellId(s)
    }
}

/// One unit of analysis: a guideword applied to a subject.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExaminationCell {
    pub id: CellId,
    pub guideword: GuideWord,
    pub subject: Subject,
}

impl ExaminationCell {
    pub fn new(guideword: GuideWord, subject: Subject) -> Self {
        Self {
            id: CellId::new(guideword, &subject),
            guideword,
            subject,
        }
    }
}

/// Subjects in enumeration order for one guideword.
fn subjects(model: &SystemModel, config: &EnumerationConfig) -> Vec<Subject> {
    let mut out = Vec::new();
    let functions = &model.functions;
    if config.include_single_functions {
        out.extend(functions.iter().map(|f| Subject::function(f.id.clone())));
    }
    if config.include_function_pairs {
        for (i, a) in functions.iter().enumerate() {
            for b in &functions[i + 1..] {
                out.push(Subject::functions([a.id.clone(), b.id.clone()]));
            }
        }
    }
    if config.include_function_characteristic {
        for f in functions {
            for c in &model.characteristics {
                out.push(Subject::function(f.id.clone()).with_characteristic(c.id.clone()));
            }
        }
    }
    if config.include_generic_characteristic {
        out.extend(
            model
                .characteristics
                .iter()
                .map(|c| Subject::generic(c.id.clone())),
        );
    }
    out
}

/// Enumerates the examination space: guidewords in catalog order (outer),
/// subjects in declaration order (inner): single functions, function pairs,
/// function × characteristic, then generic characteristics.
pub fn enumerate_cells(
    model: &SystemModel,
    config: &EnumerationConfig,
) -> Result<Vec<ExaminationCell>, ModelError> {
    let report = validate_model(model);
    if !report.is_valid() {
        return Err(ModelError::Invalid(report));
    }
    config.validate()?;
    let subjects = subjects(model, config);
    Ok(GuideWord::ALL
        .into_iter()
        .flat_map(|g| subjects.iter().map(move |s| ExaminationCell::new(g, s.clone())))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(functions: &[&str], characteristics: &[&str]) -> SystemModel {
        SystemModel {
            name: "Test".into(),
            functions: functions
                .iter()
                .map(|id| FunctionSpec {
                    id: id.to_string(),
                    class: FunctionClass::Other,
                    description: format!("function {id}"),
                })
                .collect(),
            characteristics: characteristics
                .iter()
                .map(|id| Characteristic {
                    id: id.to_string(),
                    kind: CharacteristicKind::PhysicalDesign,
                    description: format!("characteristic {id}"),
                })
                .collect(),
        }
    }

    #[test]
    fn single_function_gives_one_cell_per_guideword_in_catalog_order() {
        let cells = enumerate_cells(&model(&["F1"], &[]), &EnumerationConfig::singles_only()).unwrap();
        let ids: Vec<_> = cells.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(
            ids,
            [
                "MORE/F1",
                "LESS/F1",
                "EARLY/F1",
                "LATE/F1",
                "OPPOSITE/F1",
                "IN_ADDITION/F1",
                "NEVER/F1"
            ]
        );
    }

    #[test]
    fn inner_order_is_singles_pairs_function_characteristic_generic() {
        let config = EnumerationConfig {
            include_function_pairs: true,
            ..EnumerationConfig::default()
        };
        let cells = enumerate_cells(&model(&["b", "a"], &["x"]), &config).unwrap();
        let more: Vec<_> = cells
            .iter()
            .filter(|c| c.guideword == GuideWord::More)
            .map(|c| c.id.as_str())
            .collect();
        assert_eq!(
            more,
            ["MORE/b", "MORE/a", "MORE/a+b", "MORE/b/x", "MORE/a/x", "MORE/*/x"]
        );
    }

    #[test]
    fn cell_ids_parse_back() {
        let subject = Subject::function("Soc1").with_characteristic("autonomy");
        let id = CellId::new(GuideWord::More, &subject);
        assert_eq!(id.as_str(), "MORE/Soc1/autonomy");
        assert_eq!(id.parse().unwrap(), (GuideWord::More, subject));

        let generic = CellId::new(GuideWord::Opposite, &Subject::generic("physical_design"));
        assert_eq!(generic.as_str(), "OPPOSITE/*/physical_design");
        assert!(generic.parse().unwrap().1.is_generic());
    }

    #[test]
    fn malformed_cell_ids_are_rejected() {
        for bad in ["", "MORE", "SIDEWAYS/Soc1", "MORE/*", "MORE/a/b/c", "MORE/a b"] {
            assert!(CellId::from(bad).parse().is_err(), "{bad} should not parse");
        }
    }

    #[test]
    fn duplicate_function_ids_are_one_violation() {
        let report = validate_model(&model(&["Soc1", "Soc1"], &[]));
        assert_eq!(report.violations, [Violation::DuplicateId { id: "Soc1".into() }]);
    }

    #[test]
    fn zero_functions_is_one_violation() {
        let report = validate_model(&model(&[], &[]));
        assert_eq!(report.violations, [Violation::MissingFunctions]);
    }

    #[test]
    fn function_and_characteristic_ids_share_a_namespace() {
        let report = validate_model(&model(&["a"], &["a"]));
        assert_eq!(report.violations, [Violation::DuplicateId { id: "a".into() }]);
    }

    #[test]
    fn ids_that_break_cell_ids_are_malformed() {
        let report = validate_model(&model(&["a/b", "c+d", "*"], &[]));
        assert_eq!(report.violations.len(), 3);
    }

    #[test]
    fn invalid_model_fails_enumeration_with_report() {
        let err = enumerate_cells(&model(&["x", "x"], &[]), &EnumerationConfig::default()).unwrap_err();
        match err {
            ModelError::Invalid(report) => assert_eq!(report.violations.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_flags_off_is_rejected() {
        let config = EnumerationConfig {
            include_single_functions: false,
            include_function_pairs: false,
            include_function_characteristic: false,
            include_generic_characteristic: false,
        };
        assert!(matches!(
            enumerate_cells(&model(&["a"], &[]), &config),
            Err(ModelError::EmptyConfig)
        ));
    }

    #[test]
    fn guidewords_parse_from_labels_and_ids() {
        assert_eq!("In addition".parse::<GuideWord>().unwrap(), GuideWord::InAddition);
        assert_eq!("IN_ADDITION".parse::<GuideWord>().unwrap(), GuideWord::InAddition);
        assert_eq!("more".parse::<GuideWord>().unwrap(), GuideWord::More);
        assert!("sideways".parse::<GuideWord>().is_err());
    }

    #[test]
    fn selector_matching() {
        let m = model(&["Soc1", "Coa1"], &["autonomy", "physical_design"]);
        let soc = SubjectSelector::resolve(&m, "Soc1").unwrap();
        assert!(soc.matches(&Subject::function("Soc1")));
        assert!(soc.matches(&Subject::function("Soc1").with_characteristic("autonomy")));
        assert!(!soc.matches(&Subject::functions(["Soc1", "Coa1"])));
        let pd = SubjectSelector::resolve(&m, "physical_design").unwrap();
        assert!(pd.matches(&Subject::generic("physical_design")));
        assert!(!pd.matches(&Subject::function("Soc1").with_characteristic("physical_design")));
        assert_eq!(pd.label(&m), "Test physical design");
        assert!(SubjectSelector::resolve(&m, "Cog1").is_err());
    }
}
