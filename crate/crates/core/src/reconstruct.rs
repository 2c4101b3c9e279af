//! Log event reconstruction: render `(template, variable group)` back into a
//! log line, and draw the events that feed question generation.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LogEvent, LogTemplate, TemplateId, Token, VariableGroup};
use crate::store::TemplateStore;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReconstructError {
    #[error("template {template} expects {expected} values, group has {found}")]
    ArityMismatch {
        template: TemplateId,
        expected: usize,
        found: usize,
    },
    #[error("group belongs to template {group}, not {template}")]
    TemplateMismatch {
        template: TemplateId,
        group: TemplateId,
    },
}

/// Fixed tokens and slot values left to right, joined by single spaces.
/// Empty values contribute nothing, so no doubled separators appear.
pub fn reconstruct(template: &LogTemplate, group: &VariableGroup) -> Result<String, ReconstructError> {
    if group.template_id != template.id {
        return Err(ReconstructError::TemplateMismatch {
            template: template.id.clone(),
            group: group.template_id.clone(),
        });
    }
    let expected = template.placeholder_count();
    if group.values.len() != expected {
        return Err(ReconstructError::ArityMismatch {
            template: template.id.clone(),
            expected,
            found: group.values.len(),
        });
    }
    let pieces = template.tokens.iter().map(|token| match token {
        Token::Fixed { v } => v.as_str(),
        Token::Placeholder { i } => group.values[*i].as_str(),
    });
    let mut out = String::new();
    for piece in pieces.filter(|p| !p.is_empty()) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(piece);
    }
    Ok(out)
}

pub fn render_event(template: &LogTemplate, group: &VariableGroup) -> Result<LogEvent, ReconstructError> {
    Ok(LogEvent {
        template_id: template.id.clone(),
        rendered: reconstruct(template, group)?,
        group: group.clone(),
    })
}

/// Visits every template once (id order) and draws up to `per_template`
/// distinct groups uniformly without replacement from one seeded stream.
pub fn sample_events(store: &TemplateStore, per_template: usize, seed: u64) -> Vec<LogEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    for template in store.templates() {
        let groups = store.groups_of(&template.id);
        let take = per_template.min(groups.len());
        if take == 0 {
            continue;
        }
        for i in index::sample(&mut rng, groups.len(), take) {
            let event = render_event(template, &groups[i])
                .expect("store enforces group arity and ownership");
            events.push(event);
        }
    }
    events
}

/// JSON-lines record for an emitted event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub domain: String,
    pub template_id: TemplateId,
    pub rendered: String,
    pub values: Vec<String>,
    /// Source line of the group; lets the record be turned back into an event.
    #[serde(default)]
    pub line: u64,
}

impl From<&LogEvent> for EventRecord {
    fn from(event: &LogEvent) -> Self {
        EventRecord {
            domain: event.domain().to_owned(),
            template_id: event.template_id.clone(),
            rendered: event.rendered.clone(),
            values: event.group.values.clone(),
            line: event.group.source.line,
        }
    }
}

impl From<EventRecord> for LogEvent {
    fn from(record: EventRecord) -> Self {
        LogEvent {
            template_id: record.template_id.clone(),
            group: VariableGroup {
                template_id: record.template_id,
                values: record.values,
                source: crate::model::Source {
                    domain: record.domain,
                    line: record.line,
                },
            },
            rendered: record.rendered,
        }
    }
}
