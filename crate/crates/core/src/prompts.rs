//! What-if prompts for examination cells, rendered from one template per
//! (guideword, subject shape).
//!
//! Templates may use these slots:
//!
//! - `{guideword}`: the guideword in prompt form (`EARLIER`, `IN ADDITION`, ...)
//! - `{function}`: the subject's function ids joined with ` + `
//! - `{characteristic}`: the characteristic name, e.g. `physical design`
//! - `{CHARACTERISTIC}`: the same name in upper case, e.g. `AUTONOMY`

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::PromptError;
use crate::model::{ExaminationCell, GuideWord, SubjectShape, SystemModel};

const DEFAULT_TEMPLATES: &str = include_str!("../data/default.templates");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub guideword: GuideWord,
    pub shape: SubjectShape,
    pub template: String,
    /// Authored by analogy with the worked examples rather than quoted.
    #[serde(default)]
    pub by_analogy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateDocument {
    pub format_version: u32,
    pub templates: Vec<PromptTemplate>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: Vec<PromptTemplate>,
    by_key: HashMap<(GuideWord, SubjectShape), usize>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let doc: TemplateDocument = serde_json::from_str(DEFAULT_TEMPLATES).expect("bundled templates parse");
        TemplateSet::from_document(doc).expect("bundled templates are complete")
    }
}

fn slots(template: &str) -> impl Iterator<Item = &str> {
    template
        .split('{')
        .skip(1)
        .filter_map(|rest| rest.split_once('}').map(|(slot, _)| slot))
}

fn slot_fillable(slot: &str, shape: SubjectShape) -> bool {
    match slot {
        "guideword" => true,
        "function" => shape != SubjectShape::GenericCharacteristic,
        "characteristic" | "CHARACTERISTIC" => matches!(
            shape,
            SubjectShape::FunctionPlusCharacteristic | SubjectShape::GenericCharacteristic
        ),
        _ => false,
    }
}

impl TemplateSet {
    /// The bundled default templates, parsed once.
    pub fn bundled() -> &'static TemplateSet {
        static BUNDLED: OnceLock<TemplateSet> = OnceLock::new();
        BUNDLED.get_or_init(TemplateSet::default)
    }

    /// Checks that there is exactly one template per (guideword, shape) and
    /// that each template's slots can be filled for its shape.
    pub fn from_document(doc: TemplateDocument) -> Result<Self, PromptError> {
        let mut by_key = HashMap::new();
        for (i, t) in doc.templates.iter().enumerate() {
            if by_key.insert((t.guideword, t.shape), i).is_some() {
                return Err(PromptError::DuplicateTemplate {
                    guideword: t.guideword,
                    shape: t.shape,
                });
            }
            if let Some(slot) = slots(&t.template).find(|s| !slot_fillable(s, t.shape)) {
                return Err(PromptError::UnfillableSlot {
                    guideword: t.guideword,
                    shape: t.shape,
                    slot: slot.to_string(),
                });
            }
        }
        for guideword in GuideWord::ALL {
            for shape in SubjectShape::ALL {
                if !by_key.contains_key(&(guideword, shape)) {
                    return Err(PromptError::MissingTemplate { guideword, shape });
                }
            }
        }
        Ok(Self {
            templates: doc.templates,
            by_key,
        })
    }

    pub fn to_document(&self) -> TemplateDocument {
        TemplateDocument {
            format_version: crate::formats::FORMAT_VERSION,
            templates: self.templates.clone(),
        }
    }

    pub fn template(&self, guideword: GuideWord, shape: SubjectShape) -> &PromptTemplate {
        &self.templates[self.by_key[&(guideword, shape)]]
    }

    pub fn render(&self, cell: &ExaminationCell, model: &SystemModel) -> Result<String, PromptError> {
        let subject = &cell.subject;
        for f in &subject.functions {
            if model.function(f).is_none() {
                return Err(PromptError::UnknownReference {
                    kind: "function",
                    id: f.clone(),
                });
            }
        }
        let characteristic = match &subject.characteristic {
            Some(id) => Some(
                model
                    .characteristic(id)
                    .ok_or_else(|| PromptError::UnknownReference {
                        kind: "characteristic",
                        id: id.clone(),
                    })?,
            ),
            None => None,
        };
        if subject.is_degenerate() {
            return Err(PromptError::UnknownReference {
                kind: "subject",
                id: cell.id.to_string(),
            });
        }

        let template = &self.template(cell.guideword, subject.shape()).template;
        let functions = subject.functions.iter().cloned().collect::<Vec<_>>().join(" + ");
        let name = characteristic.map(|c| c.display_name()).unwrap_or_default();
        Ok(template
            .replace("{guideword}", cell.guideword.prompt_form())
            .replace("{function}", &functions)
            .replace("{CHARACTERISTIC}", &name.to_uppercase())
            .replace("{characteristic}", &name))
    }
}

/// Renders the what-if question for `cell` with the bundled templates.
pub fn generate_prompt(cell: &ExaminationCell, model: &SystemModel) -> Result<String, PromptError> {
    TemplateSet::bundled().render(cell, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Characteristic, CharacteristicKind, FunctionClass, FunctionSpec, Subject};

    fn ari() -> SystemModel {
        SystemModel {
            name: "Ari".into(),
            functions: ["Cog1", "Soc1", "Coa1"]
                .into_iter()
                .map(|id| FunctionSpec {
                    id: id.into(),
                    class: FunctionClass::Other,
                    description: "d".into(),
                })
                .collect(),
            characteristics: vec![
                Characteristic {
                    id: "physical_design".into(),
                    kind: CharacteristicKind::PhysicalDesign,
                    description: "d".into(),
                },
                Characteristic {
                    id: "autonomy".into(),
                    kind: CharacteristicKind::Autonomy,
                    description: "d".into(),
                },
            ],
        }
    }

    fn prompt(g: GuideWord, s: Subject) -> String {
        generate_prompt(&ExaminationCell::new(g, s), &ari()).unwrap()
    }

    #[test]
    fn worked_example_questions_are_reproduced() {
        assert_eq!(
            prompt(GuideWord::Early, Subject::function("Cog1")),
            "What if this function were provided ⟨EARLIER⟩ than the user expects?"
        );
        assert_eq!(
            prompt(GuideWord::Opposite, Subject::function("Soc1")),
            "What if this function had the ⟨OPPOSITE⟩ effect to the user's expectations?"
        );
        assert_eq!(
            prompt(
                GuideWord::Less,
                Subject::function("Soc1").with_characteristic("autonomy")
            ),
            "What if this function were provided with ⟨LESS⟩ ⟨AUTONOMY⟩ than the user expects?"
        );
        assert_eq!(
            prompt(GuideWord::Opposite, Subject::generic("physical_design")),
            "What if the robot had the ⟨OPPOSITE⟩ ⟨physical design⟩; how would this affect user expectations of each function?"
        );
    }

    #[test]
    fn late_uses_comparative_form() {
        assert_eq!(
            prompt(GuideWord::Late, Subject::function("Coa1")),
            "What if this function were provided ⟨LATER⟩ than the user expects?"
        );
    }

    #[test]
    fn function_sets_name_their_functions() {
        assert_eq!(
            prompt(GuideWord::More, Subject::functions(["Soc1", "Coa1"])),
            "What if these functions (Coa1 + Soc1) were provided ⟨MORE⟩ than the user expects?"
        );
    }

    #[test]
    fn dangling_reference_is_an_error() {
        let cell = ExaminationCell::new(GuideWord::More, Subject::function("Nope"));
        assert!(matches!(
            generate_prompt(&cell, &ari()),
            Err(PromptError::UnknownReference { kind: "function", .. })
        ));
        let cell = ExaminationCell::new(GuideWord::More, Subject::generic("colour"));
        assert!(matches!(
            generate_prompt(&cell, &ari()),
            Err(PromptError::UnknownReference {
                kind: "characteristic",
                ..
            })
        ));
    }

    #[test]
    fn bundled_set_marks_only_quoted_templates_as_verbatim() {
        let set = TemplateSet::default();
        let verbatim: Vec<_> = set
            .to_document()
            .templates
            .into_iter()
            .filter(|t| !t.by_analogy)
            .map(|t| (t.guideword, t.shape))
            .collect();
        assert_eq!(verbatim.len(), 4);
        assert!(verbatim.contains(&(GuideWord::Early, SubjectShape::Function)));
    }

    #[test]
    fn missing_and_duplicate_templates_are_rejected() {
        let mut doc = TemplateSet::default().to_document();
        let removed = doc.templates.pop().unwrap();
        assert!(matches!(
            TemplateSet::from_document(doc.clone()),
            Err(PromptError::MissingTemplate { .. })
        ));
        doc.templates.push(removed.clone());
        doc.templates.push(removed);
        assert!(matches!(
            TemplateSet::from_document(doc),
            Err(PromptError::DuplicateTemplate { .. })
        ));
    }

    #[test]
    fn characteristic_slot_on_function_shape_is_unfillable() {
        let mut doc = TemplateSet::default().to_document();
        doc.templates[0].template = "What if {characteristic}?".into();
        assert!(matches!(
            TemplateSet::from_document(doc),
            Err(PromptError::UnfillableSlot { .. })
        ));
    }
}
