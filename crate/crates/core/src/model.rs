//! Shared domain types and the whitespace tokenizer.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Surface syntax of a placeholder in serialized template strings.
pub const PLACEHOLDER: &str = "<*>";

/// Splits on runs of whitespace. Never produces empty tokens.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Re-joins the tokens of `text` with single spaces.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("log content is empty (domain {domain}, line {line})")]
    EmptyContent { domain: String, line: u64 },
    #[error("line numbers are 1-based, got 0")]
    ZeroLine,
    #[error("template {0} has no tokens")]
    EmptyTemplate(TemplateId),
    #[error("template {id}: placeholder slots out of order (expected {expected}, found {found})")]
    SlotOrder {
        id: TemplateId,
        expected: usize,
        found: usize,
    },
    #[error("unknown knowledge dimension `{0}`")]
    UnknownDimension(String),
    #[error("unknown review status `{0}`")]
    UnknownStatus(String),
}

/// Where a raw log came from: its domain and 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Source {
    pub domain: String,
    pub line: u64,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.domain, self.line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLogRecord {
    pub domain: String,
    pub line_no: u64,
    pub content: String,
}

impl RawLogRecord {
    pub fn new(
        domain: impl Into<String>,
        line_no: u64,
        content: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let domain = domain.into();
        let mut content = content.into();
        while content.ends_with('\n') || content.ends_with('\r') {
            content.pop();
        }
        if line_no == 0 {
            return Err(ModelError::ZeroLine);
        }
        if content.trim().is_empty() {
            return Err(ModelError::EmptyContent {
                domain,
                line: line_no,
            });
        }
        Ok(Self {
            domain,
            line_no,
            content,
        })
    }

    pub fn source(&self) -> Source {
        Source {
            domain: self.domain.clone(),
            line: self.line_no,
        }
    }

    pub fn tokens(&self) -> Vec<&str> {
        tokenize(&self.content)
    }
}

/// Stable template identifier. Ids minted by this crate are zero-padded so
/// lexical order equals creation order within a domain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateId(pub String);

impl TemplateId {
    pub fn minted(domain: &str, ordinal: usize) -> Self {
        TemplateId(format!("{domain}-T{ordinal:06}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TemplateId {
    fn from(s: &str) -> Self {
        TemplateId(s.to_owned())
    }
}

/// One element of a template: literal text or a numbered slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "t")]
pub enum Token {
    #[serde(rename = "fix")]
    Fixed { v: String },
    #[serde(rename = "var")]
    Placeholder { i: usize },
}

impl Token {
    pub fn fixed(text: impl Into<String>) -> Self {
        Token::Fixed { v: text.into() }
    }

    pub fn slot(index: usize) -> Self {
        Token::Placeholder { i: index }
    }

    pub fn is_placeholder(&self) -> bool {
        matches!(self, Token::Placeholder { .. })
    }

    pub fn fixed_text(&self) -> Option<&str> {
        match self {
            Token::Fixed { v } => Some(v),
            Token::Placeholder { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogTemplate {
    pub id: TemplateId,
    pub domain: String,
    pub tokens: Vec<Token>,
}

impl LogTemplate {
    /// Builds a template and checks the slot-order invariant.
    pub fn new(
        id: TemplateId,
        domain: impl Into<String>,
        tokens: Vec<Token>,
    ) -> Result<Self, ModelError> {
        let template = Self {
            id,
            domain: domain.into(),
            tokens,
        };
        template.validate()?;
        Ok(template)
    }

    /// Builds a template from a shape where `None` marks a placeholder;
    /// slots are numbered left to right.
    pub fn from_shape(id: TemplateId, domain: impl Into<String>, shape: &[Option<String>]) -> Self {
        let mut slot = 0;
        let tokens = shape
            .iter()
            .map(|t| match t {
                Some(text) => Token::fixed(text.clone()),
                None => {
                    slot += 1;
                    Token::slot(slot - 1)
                }
            })
            .collect();
        Self {
            id,
            domain: domain.into(),
            tokens,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.tokens.is_empty() {
            return Err(ModelError::EmptyTemplate(self.id.clone()));
        }
        let mut expected = 0;
        for token in &self.tokens {
            if let Token::Placeholder { i } = token {
                if *i != expected {
                    return Err(ModelError::SlotOrder {
                        id: self.id.clone(),
                        expected,
                        found: *i,
                    });
                }
                expected += 1;
            }
        }
        Ok(())
    }

    pub fn placeholder_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_placeholder()).count()
    }

    /// Token shape with placeholders as `None`; used for dedup and matching.
    pub fn shape(&self) -> Vec<Option<&str>> {
        self.tokens.iter().map(Token::fixed_text).collect()
    }

    pub fn fixed_tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().filter_map(Token::fixed_text)
    }
}

/// Renders with `<*>` for every placeholder, e.g. `send <*> bytes`.
impl fmt::Display for LogTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, token) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(token.fixed_text().unwrap_or(PLACEHOLDER))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableGroup {
    pub template_id: TemplateId,
    pub values: Vec<String>,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEvent {
    pub template_id: TemplateId,
    pub group: VariableGroup,
    pub rendered: String,
}

impl LogEvent {
    pub fn domain(&self) -> &str {
        &self.group.source.domain
    }
}

/// The five competencies every event is questioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeDimension {
    GrokPatternParsing,
    LogEventInsights,
    RootCauseAnalysis,
    ComponentCorrelation,
    FailureForecast,
}

impl KnowledgeDimension {
    pub const ALL: [KnowledgeDimension; 5] = [
        KnowledgeDimension::GrokPatternParsing,
        KnowledgeDimension::LogEventInsights,
        KnowledgeDimension::RootCauseAnalysis,
        KnowledgeDimension::ComponentCorrelation,
        KnowledgeDimension::FailureForecast,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            KnowledgeDimension::GrokPatternParsing => "grok_pattern_parsing",
            KnowledgeDimension::LogEventInsights => "log_event_insights",
            KnowledgeDimension::RootCauseAnalysis => "root_cause_analysis",
            KnowledgeDimension::ComponentCorrelation => "component_correlation",
            KnowledgeDimension::FailureForecast => "failure_forecast",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            KnowledgeDimension::GrokPatternParsing => "Grok Pattern Parsing",
            KnowledgeDimension::LogEventInsights => "Log Event Insights",
            KnowledgeDimension::RootCauseAnalysis => "Root Cause Analysis",
            KnowledgeDimension::ComponentCorrelation => "Component Correlation Analysis",
            KnowledgeDimension::FailureForecast => "Potential Failure Forecast",
        }
    }
}

impl fmt::Display for KnowledgeDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for KnowledgeDimension {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KnowledgeDimension::ALL
            .into_iter()
            .find(|d| d.slug() == s)
            .ok_or_else(|| ModelError::UnknownDimension(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    Pending,
    Accepted,
    Rejected,
}

impl ReviewStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ReviewStatus::Pending => "pending",
            ReviewStatus::Accepted => "accepted",
            ReviewStatus::Rejected => "rejected",
        }
    }
}

impl fmt::Display for ReviewStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReviewStatus {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pending" => Ok(ReviewStatus::Pending),
            "accepted" => Ok(ReviewStatus::Accepted),
            "rejected" => Ok(ReviewStatus::Rejected),
            _ => Err(ModelError::UnknownStatus(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Model name reported by the generation client.
    pub model: String,
    pub generated_at: DateTime<Utc>,
    /// Index into the dimension's question variations, `0..10`.
    pub variation: usize,
    /// Number of client calls it took to obtain the answer.
    pub attempts: u32,
}

/// A generated question/log/answer instance awaiting or past review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub id: String,
    pub domain: String,
    pub dimension: KnowledgeDimension,
    pub question: String,
    pub log: String,
    pub answer: String,
    pub status: ReviewStatus,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_note: Option<String>,
    /// Event the pair was generated from.
    pub template_id: TemplateId,
    pub source: Source,
    /// Variable values of the event, so fixed tokens can be told apart.
    #[serde(default)]
    pub variables: Vec<String>,
}

impl QAPair {
    /// Pair id for an event/dimension combination; unique per event.
    pub fn make_id(template_id: &TemplateId, source: &Source, dimension: KnowledgeDimension) -> String {
        format!(
            "{}@{}:{}#{}",
            template_id,
            source.domain,
            source.line,
            dimension.slug()
        )
    }

    /// The prompt the answer was generated from.
    pub fn prompt(&self) -> String {
        crate::knowledge::assemble_prompt(&self.question, &self.log)
    }

    /// Key identifying the source event, shared by the event's five pairs.
    pub fn event_key(&self) -> (&str, &TemplateId, &Source) {
        (&self.domain, &self.template_id, &self.source)
    }

    /// Same content, ignoring review state.
    pub fn same_content(&self, other: &QAPair) -> bool {
        self.id == other.id
            && self.domain == other.domain
            && self.dimension == other.dimension
            && self.question == other.question
            && self.log == other.log
            && self.answer == other.answer
            && self.template_id == other.template_id
            && self.source == other.source
            && self.variables == other.variables
    }
}
