//! Interpretable knowledge generation: every event is questioned on five
//! dimensions through a text-generation service, and the answers are screened
//! before human review.

mod client;
mod generate;
mod questions;
mod validate;

use std::collections::BTreeMap;

use thiserror::Error;

pub use client::{
    complete_with_retry, prompt_hash, Attempted, ClientError, FlakyClient, MockClient, RecordingClient,
    ReplayClient, ReplayEntry, RetryPolicy, TextGenClient,
};
pub use generate::{event_of, pair_order, GenerationFailure, GenerationJob, GenerationOutcome, Generator};
pub use questions::{QuestionBank, DOMAIN_SLOT, VARIATIONS_PER_DIMENSION};
pub use validate::{auto_validate, fixed_log_tokens, FlagReason, Validation, ValidatorConfig};

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("no display name registered for domain `{0}`")]
    UnknownDomain(String),
    #[error("question bank: {0}")]
    QuestionBank(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Prompt text: the question, a blank line, then `Log: <event>`.
pub fn assemble_prompt(question: &str, log: &str) -> String {
    format!("{question}\n\nLog: {log}")
}

/// Display names for domains, looked up case-insensitively.
#[derive(Debug, Clone, Default)]
pub struct DomainRegistry {
    names: BTreeMap<String, String>,
}

impl DomainRegistry {
    /// The Loghub systems, plus Spirit, Apache and OpenStack.
    pub fn loghub() -> Self {
        let mut registry = Self::default();
        for name in [
            "OpenSSH",
            "HDFS",
            "HPC",
            "Windows",
            "Mac",
            "Thunderbird",
            "Spark",
            "Linux",
            "Zookeeper",
            "HealthApp",
            "Hadoop",
            "BGL",
            "Android",
            "Proxifier",
            "Spirit",
            "Apache",
            "OpenStack",
        ] {
            registry.register(name, name);
        }
        registry
    }

    pub fn register(&mut self, domain: &str, display: &str) {
        self.names.insert(domain.to_lowercase(), display.to_owned());
    }

    pub fn display(&self, domain: &str) -> Option<&str> {
        self.names.get(&domain.to_lowercase()).map(String::as_str)
    }
}
