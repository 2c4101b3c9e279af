//! Rule-based screening of generated answers before human review.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{normalize, tokenize, KnowledgeDimension, QAPair};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorConfig {
    pub min_answer_tokens: usize,
    /// Lower-case phrases that mark a refusal.
    pub refusal_phrases: Vec<String>,
}

impl Default for ValidatorConfig {
    fn default() -> Self {
        Self {
            min_answer_tokens: 5,
            refusal_phrases: [
                "as an ai language model",
                "as an ai model",
                "i cannot help with",
                "i can't help with",
                "i'm sorry, but i can",
                "i am unable to",
                "i'm unable to",
                "i cannot provide",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum FlagReason {
    Empty,
    TooShort { tokens: usize, min: usize },
    Echo,
    Refusal { phrase: String },
    NoFixedToken,
}

impl fmt::Display for FlagReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlagReason::Empty => f.write_str("empty"),
            FlagReason::TooShort { tokens, min } => write!(f, "too short ({tokens} < {min} tokens)"),
            FlagReason::Echo => f.write_str("echo"),
            FlagReason::Refusal { phrase } => write!(f, "refusal (`{phrase}`)"),
            FlagReason::NoFixedToken => f.write_str("no fixed token of the log mentioned"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Validation {
    Valid,
    Flagged(FlagReason),
}

impl Validation {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validation::Valid)
    }
}

/// Tokens of `log` that are not part of any variable value.
pub fn fixed_log_tokens<'a>(log: &'a str, variables: &[String]) -> Vec<&'a str> {
    let mut variable_tokens: HashMap<&str, usize> = HashMap::new();
    for v in variables {
        for t in tokenize(v) {
            *variable_tokens.entry(t).or_default() += 1;
        }
    }
    tokenize(log)
        .into_iter()
        .filter(|t| match variable_tokens.get_mut(t) {
            Some(n) if *n > 0 => {
                *n -= 1;
                false
            }
            _ => true,
        })
        .collect()
}

fn mentions_fixed_token(answer: &str, fixed: &[&str]) -> bool {
    let answer = answer.to_lowercase();
    let mut candidates = fixed
        .iter()
        .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
        .filter(|t| t.chars().count() >= 2 && t.chars().any(char::is_alphanumeric))
        .peekable();
    // nothing to look for: rule cannot apply
    if candidates.peek().is_none() {
        return true;
    }
    candidates.any(|t| answer.contains(&t))
}

/// Pure and deterministic; the first rule that fires wins.
pub fn auto_validate(pair: &QAPair, config: &ValidatorConfig) -> Validation {
    let answer = normalize(&pair.answer);
    if answer.is_empty() {
        return Validation::Flagged(FlagReason::Empty);
    }
    let echoes = [normalize(&pair.prompt()), normalize(&pair.question), normalize(&pair.log)];
    if echoes.contains(&answer) {
        return Validation::Flagged(FlagReason::Echo);
    }
    let lower = answer.to_lowercase();
    if let Some(phrase) = config.refusal_phrases.iter().find(|p| lower.contains(p.as_str())) {
        return Validation::Flagged(FlagReason::Refusal {
            phrase: phrase.clone(),
        });
    }
    let tokens = tokenize(&answer).len();
    if tokens < config.min_answer_tokens {
        return Validation::Flagged(FlagReason::TooShort {
            tokens,
            min: config.min_answer_tokens,
        });
    }
    if pair.dimension == KnowledgeDimension::GrokPatternParsing
        && !mentions_fixed_token(&answer, &fixed_log_tokens(&pair.log, &pair.variables))
    {
        return Validation::Flagged(FlagReason::NoFixedToken);
    }
    Validation::Valid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Provenance, ReviewStatus, Source};

    fn pair(dimension: KnowledgeDimension, answer: &str) -> QAPair {
        QAPair {
            id: "p".into(),
            domain: "OpenSSH".into(),
            dimension,
            question: "In your capacity as a performance tuning specialist in OpenSSH, what system performance anomalies could potentially be forecasted by this log?".into(),
            log: "fatal: Read from socket failed: Connection reset by peer.".into(),
            answer: answer.into(),
            status: ReviewStatus::Pending,
            provenance: Provenance {
                model: "m".into(),
                generated_at: chrono::DateTime::UNIX_EPOCH,
                variation: 0,
                attempts: 1,
            },
            review_note: None,
            template_id: "OpenSSH-T000000".into(),
            source: Source { domain: "OpenSSH".into(), line: 1 },
            variables: vec!["Connection reset by peer.".into()],
        }
    }

    #[test]
    fn empty_and_whitespace() {
        let cfg = ValidatorConfig::default();
        assert_eq!(auto_validate(&pair(KnowledgeDimension::FailureForecast, ""), &cfg), Validation::Flagged(FlagReason::Empty));
        assert_eq!(auto_validate(&pair(KnowledgeDimension::FailureForecast, " \n\t"), &cfg), Validation::Flagged(FlagReason::Empty));
    }

    #[test]
    fn echo_of_prompt() {
        let p = pair(KnowledgeDimension::FailureForecast, "");
        let echoed = pair(KnowledgeDimension::FailureForecast, &p.prompt());
        assert_eq!(auto_validate(&echoed, &ValidatorConfig::default()), Validation::Flagged(FlagReason::Echo));
    }

    #[test]
    fn published_example_answer_is_valid() {
        let p = pair(
            KnowledgeDimension::FailureForecast,
            "The log message in OpenSSH indicates that the connection was unexpectedly terminated, which could suggest network or server issues.",
        );
        assert_eq!(auto_validate(&p, &ValidatorConfig::default()), Validation::Valid);
    }

    #[test]
    fn refusal_and_short() {
        let cfg = ValidatorConfig::default();
        let r = pair(KnowledgeDimension::RootCauseAnalysis, "As an AI language model I cannot see your system logs.");
        assert!(matches!(auto_validate(&r, &cfg), Validation::Flagged(FlagReason::Refusal { .. })));
        let s = pair(KnowledgeDimension::RootCauseAnalysis, "Network issue.");
        assert!(matches!(auto_validate(&s, &cfg), Validation::Flagged(FlagReason::TooShort { .. })));
    }

    #[test]
    fn grok_needs_a_fixed_token() {
        let cfg = ValidatorConfig::default();
        let off = pair(KnowledgeDimension::GrokPatternParsing, "Use %{GREEDYDATA:msg} to capture everything at once.");
        assert_eq!(auto_validate(&off, &cfg), Validation::Flagged(FlagReason::NoFixedToken));
        let on = pair(
            KnowledgeDimension::GrokPatternParsing,
            "Pattern: fatal: Read from socket failed: %{GREEDYDATA:reason}",
        );
        assert_eq!(auto_validate(&on, &cfg), Validation::Valid);
        // a variable value alone does not count
        let var_only = pair(KnowledgeDimension::GrokPatternParsing, "The reason field holds connection reset by peer text.");
        assert_eq!(
            fixed_log_tokens(&var_only.log, &var_only.variables),
            vec!["fatal:", "Read", "from", "socket", "failed:"]
        );
        assert_eq!(auto_validate(&var_only, &cfg), Validation::Flagged(FlagReason::NoFixedToken));
    }
}
