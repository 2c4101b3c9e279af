//! The template store: deduplicated templates plus every variable group that
//! was extracted for them, with the JSON document format used on disk.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LogTemplate, ModelError, TemplateId, VariableGroup};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("duplicate template id {0}")]
    DuplicateId(TemplateId),
    #[error("template {new} duplicates the token sequence of {existing}")]
    DuplicateTokens { existing: TemplateId, new: TemplateId },
    #[error("group from {source_ref} references unknown template {template}")]
    UnknownTemplate {
        template: TemplateId,
        source_ref: String,
    },
    #[error("group from {source_ref} has {found} values, template {template} has {expected} placeholders")]
    Arity {
        template: TemplateId,
        source_ref: String,
        expected: usize,
        found: usize,
    },
    #[error("cannot merge stores: domain `{0}` present in both")]
    OverlappingDomain(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("template store json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("template store io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct TemplateStore {
    templates: BTreeMap<TemplateId, LogTemplate>,
    groups: BTreeMap<TemplateId, Vec<VariableGroup>>,
    // (domain, token count) -> template ids, kept sorted.
    by_length: HashMap<(String, usize), Vec<TemplateId>>,
    // (domain, shape) -> id; enforces dedup.
    by_shape: HashMap<(String, Vec<Option<String>>), TemplateId>,
}

/// On-disk layout; field names are part of the file format.
#[derive(Debug, Serialize, Deserialize)]
struct StoreDocument {
    templates: Vec<LogTemplate>,
    groups: Vec<VariableGroup>,
}

fn owned_shape(template: &LogTemplate) -> Vec<Option<String>> {
    template
        .shape()
        .into_iter()
        .map(|t| t.map(str::to_owned))
        .collect()
}

impl TemplateStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn template_count(&self) -> usize {
        self.templates.len()
    }

    pub fn group_count(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn insert_template(&mut self, template: LogTemplate) -> Result<(), StoreError> {
        template.validate()?;
        if self.templates.contains_key(&template.id) {
            return Err(StoreError::DuplicateId(template.id));
        }
        let shape_key = (template.domain.clone(), owned_shape(&template));
        if let Some(existing) = self.by_shape.get(&shape_key) {
            return Err(StoreError::DuplicateTokens {
                existing: existing.clone(),
                new: template.id,
            });
        }
        self.by_shape.insert(shape_key, template.id.clone());
        let bucket = self
            .by_length
            .entry((template.domain.clone(), template.tokens.len()))
            .or_default();
        let at = bucket.partition_point(|id| id < &template.id);
        bucket.insert(at, template.id.clone());
        self.groups.entry(template.id.clone()).or_default();
        self.templates.insert(template.id.clone(), template);
        Ok(())
    }

    pub fn add_group(&mut self, group: VariableGroup) -> Result<(), StoreError> {
        let Some(template) = self.templates.get(&group.template_id) else {
            return Err(StoreError::UnknownTemplate {
                template: group.template_id,
                source_ref: group.source.to_string(),
            });
        };
        let expected = template.placeholder_count();
        if group.values.len() != expected {
            return Err(StoreError::Arity {
                template: group.template_id,
                source_ref: group.source.to_string(),
                expected,
                found: group.values.len(),
            });
        }
        self.groups
            .get_mut(&group.template_id)
            .expect("group list created with template")
            .push(group);
        Ok(())
    }

    pub fn template(&self, id: &TemplateId) -> Option<&LogTemplate> {
        self.templates.get(id)
    }

    /// Templates in id order.
    pub fn templates(&self) -> impl Iterator<Item = &LogTemplate> {
        self.templates.values()
    }

    /// Groups of one template in insertion order.
    pub fn groups_of(&self, id: &TemplateId) -> &[VariableGroup] {
        self.groups.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All groups ordered by (template id, source).
    pub fn groups(&self) -> Vec<&VariableGroup> {
        let mut out: Vec<&VariableGroup> = self.groups.values().flatten().collect();
        out.sort_by(|a, b| (&a.template_id, &a.source).cmp(&(&b.template_id, &b.source)));
        out
    }

    pub fn find_by_shape(&self, domain: &str, shape: &[Option<String>]) -> Option<&LogTemplate> {
        self.by_shape
            .get(&(domain.to_owned(), shape.to_vec()))
            .and_then(|id| self.templates.get(id))
    }

    /// Template ids of `domain` with exactly `len` tokens, ascending.
    pub fn with_length(&self, domain: &str, len: usize) -> &[TemplateId] {
        self.by_length
            .get(&(domain.to_owned(), len))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Ids of all templates with `len` tokens regardless of domain, ascending.
    pub fn with_length_any_domain(&self, len: usize) -> Vec<&TemplateId> {
        let mut ids: Vec<&TemplateId> = self
            .by_length
            .iter()
            .filter(|((_, l), _)| *l == len)
            .flat_map(|(_, ids)| ids.iter())
            .collect();
        ids.sort();
        ids
    }

    pub fn domains(&self) -> BTreeSet<&str> {
        self.templates.values().map(|t| t.domain.as_str()).collect()
    }

    /// Disjoint-domain union of two stores.
    pub fn merge(mut self, other: TemplateStore) -> Result<TemplateStore, StoreError> {
        let mine = self.domains().into_iter().map(str::to_owned).collect::<BTreeSet<_>>();
        if let Some(d) = other.domains().into_iter().find(|d| mine.contains(*d)) {
            return Err(StoreError::OverlappingDomain(d.to_owned()));
        }
        let TemplateStore {
            templates, groups, ..
        } = other;
        for template in templates.into_values() {
            self.insert_template(template)?;
        }
        for group in groups.into_values().flatten() {
            self.add_group(group)?;
        }
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String, StoreError> {
        let doc = StoreDocument {
            templates: self.templates.values().cloned().collect(),
            groups: self.groups().into_iter().cloned().collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Parses a store document, re-checking every invariant.
    pub fn from_json(text: &str) -> Result<Self, StoreError> {
        let doc: StoreDocument = serde_json::from_str(text)?;
        let mut store = TemplateStore::new();
        for template in doc.templates {
            store.insert_template(template)?;
        }
        for group in doc.groups {
            store.add_group(group)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
