//! Catalog of known ethical hazard names. A hazard is novel when it is not
//! part of the base catalog and had to be registered during a session.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::TaxonomyError;

const BASE_CATALOG: &str = include_str!("../data/base.taxonomy");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HazardSource {
    BaseCatalog,
    SessionRegistered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardEntry {
    /// Normalized name; the identity of the hazard.
    pub canonical_name: String,
    /// Display form used in rendered tables.
    pub label: String,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub aliases: BTreeSet<String>,
    pub source: HazardSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl HazardEntry {
    pub fn is_novel(&self) -> bool {
        self.source == HazardSource::SessionRegistered
    }
}

/// Trim, collapse internal whitespace, case-fold and drop trailing `*`
/// novelty markers.
pub fn normalize(name: &str) -> String {
    let folded = name.to_lowercase();
    let stripped = folded.trim_end_matches(|c: char| c == '*' || c.is_whitespace());
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Display form of a name: same as [`normalize`] but case is kept.
fn tidy(name: &str) -> String {
    name.trim_end_matches(|c: char| c == '*' || c.is_whitespace())
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Resolved {
    pub canonical_name: String,
    pub label: String,
    pub is_novel: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "resolution", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Resolution {
    Known(Resolved),
    /// No entry matches; the name must be registered before use.
    Unresolved {
        normalized: String,
    },
}

impl Resolution {
    pub fn known(self) -> Option<Resolved> {
        match self {
            Resolution::Known(r) => Some(r),
            Resolution::Unresolved { .. } => None,
        }
    }
}

/// On-disk shape of a `.taxonomy` file. Every entry in such a file belongs to
/// the base catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyDocument {
    pub format_version: u32,
    pub entries: Vec<CatalogEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub canonical_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub aliases: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HazardTaxonomy {
    entries: Vec<HazardEntry>,
    /// normalized name or alias -> entry index
    index: HashMap<String, usize>,
}

impl HazardTaxonomy {
    /// The bundled catalog of hazard names.
    pub fn base_catalog() -> Self {
        let doc: TaxonomyDocument = serde_json::from_str(BASE_CATALOG).expect("bundled base catalog parses");
        Self::from_document(&doc).expect("bundled base catalog is consistent")
    }

    pub fn from_document(doc: &TaxonomyDocument) -> Result<Self, TaxonomyError> {
        let mut taxonomy = HazardTaxonomy::default();
        for entry in &doc.entries {
            let canonical = normalize(&entry.canonical_name);
            if canonical.is_empty() {
                return Err(TaxonomyError::EmptyName);
            }
            let label = entry
                .label
                .as_deref()
                .map(tidy)
                .unwrap_or_else(|| sentence_case(&canonical));
            taxonomy.insert(HazardEntry {
                canonical_name: canonical,
                label,
                aliases: entry.aliases.iter().map(|a| normalize(a)).collect(),
                source: HazardSource::BaseCatalog,
                description: entry.description.clone(),
            })?;
        }
        Ok(taxonomy)
    }

    /// Base-catalog entries as a document. Session registrations are not
    /// part of a taxonomy file; they live in the journal.
    pub fn to_document(&self) -> TaxonomyDocument {
        TaxonomyDocument {
            format_version: crate::formats::FORMAT_VERSION,
            entries: self
                .entries
                .iter()
                .filter(|e| e.source == HazardSource::BaseCatalog)
                .map(|e| CatalogEntry {
                    canonical_name: e.canonical_name.clone(),
                    label: Some(e.label.clone()),
                    aliases: e.aliases.clone(),
                    description: e.description.clone(),
                })
                .collect(),
        }
    }

    fn insert(&mut self, entry: HazardEntry) -> Result<(), TaxonomyError> {
        let existing = |key: &str| {
            self.index
                .get(key)
                .map(|&i| self.entries[i].canonical_name.clone())
        };
        if let Some(existing) = existing(&entry.canonical_name) {
            return Err(TaxonomyError::Duplicate {
                name: entry.canonical_name,
                existing,
            });
        }
        for alias in &entry.aliases {
            if alias.is_empty() {
                return Err(TaxonomyError::EmptyName);
            }
            if let Some(existing) = existing(alias) {
                return Err(TaxonomyError::AliasCollision {
                    alias: alias.clone(),
                    existing,
                });
            }
            if alias == &entry.canonical_name {
                return Err(TaxonomyError::AliasCollision {
                    alias: alias.clone(),
                    existing: entry.canonical_name.clone(),
                });
            }
        }
        let position = self.entries.len();
        self.index.insert(entry.canonical_name.clone(), position);
        for alias in &entry.aliases {
            self.index.insert(alias.clone(), position);
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[HazardEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&HazardEntry> {
        self.index.get(&normalize(name)).map(|&i| &self.entries[i])
    }

    pub fn resolve(&self, name: &str) -> Result<Resolution, TaxonomyError> {
        let normalized = normalize(name);
        if normalized.is_empty() {
            return Err(TaxonomyError::EmptyName);
        }
        Ok(match self.index.get(&normalized) {
            Some(&i) => {
                let entry = &self.entries[i];
                Resolution::Known(Resolved {
                    canonical_name: entry.canonical_name.clone(),
                    label: entry.label.clone(),
                    is_novel: entry.is_novel(),
                })
            }
            None => Resolution::Unresolved { normalized },
        })
    }

    /// Adds a hazard that the base catalog does not know.
    pub fn register_novel(&mut self, name: &str, description: &str) -> Result<&HazardEntry, TaxonomyError> {
        let canonical = normalize(name);
        if canonical.is_empty() {
            return Err(TaxonomyError::EmptyName);
        }
        let description = description.trim();
        self.insert(HazardEntry {
            canonical_name: canonical,
            label: tidy(name),
            aliases: BTreeSet::new(),
            source: HazardSource::SessionRegistered,
            description: (!description.is_empty()).then(|| description.to_string()),
        })?;
        Ok(self.entries.last().expect("entry just inserted"))
    }
}

fn sentence_case(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
