use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KnowledgeError;
use crate::model::KnowledgeDimension;

/// Number of question variations registered per dimension.
pub const VARIATIONS_PER_DIMENSION: usize = 10;

/// Placeholder replaced by the domain display name.
pub const DOMAIN_SLOT: &str = "{DOMAIN}";

const BUILTIN: &str = include_str!("../../data/question_bank.v1.json");

#[derive(Debug, Serialize, Deserialize)]
struct BankFile {
    version: u32,
    variations: BTreeMap<KnowledgeDimension, Vec<String>>,
}

/// The question variations: exactly ten distinct texts for each of the five
/// dimensions, each mentioning `{DOMAIN}`.
#[derive(Debug, Clone)]
pub struct QuestionBank {
    version: u32,
    variations: BTreeMap<KnowledgeDimension, Vec<String>>,
}

impl QuestionBank {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("bundled question bank is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KnowledgeError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, KnowledgeError> {
        let file: BankFile = serde_json::from_str(text)?;
        for dim in KnowledgeDimension::ALL {
            let list = file
                .variations
                .get(&dim)
                .ok_or_else(|| KnowledgeError::QuestionBank(format!("dimension {dim} missing")))?;
            if list.len() != VARIATIONS_PER_DIMENSION {
                return Err(KnowledgeError::QuestionBank(format!(
                    "dimension {dim} has {} variations, expected {VARIATIONS_PER_DIMENSION}",
                    list.len()
                )));
            }
            let distinct: HashSet<&String> = list.iter().collect();
            if distinct.len() != list.len() {
                return Err(KnowledgeError::QuestionBank(format!("dimension {dim} repeats a variation")));
            }
            if let Some(q) = list.iter().find(|q| !q.contains(DOMAIN_SLOT)) {
                return Err(KnowledgeError::QuestionBank(format!("variation without {DOMAIN_SLOT}: {q}")));
            }
        }
        Ok(Self {
            version: file.version,
            variations: file.variations,
        })
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn variations(&self, dimension: KnowledgeDimension) -> &[String] {
        &self.variations[&dimension]
    }

    /// Variation `index` with the domain substituted.
    pub fn question(&self, dimension: KnowledgeDimension, index: usize, domain_display: &str) -> String {
        self.variations(dimension)[index].replace(DOMAIN_SLOT, domain_display)
    }

    /// Index of the variation that renders to `question` for this domain.
    pub fn variation_of(&self, dimension: KnowledgeDimension, question: &str, domain_display: &str) -> Option<usize> {
        (0..VARIATIONS_PER_DIMENSION).find(|&i| self.question(dimension, i, domain_display) == question)
    }

    pub fn len(&self) -> usize {
        self.variations.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_fifty_distinct_entries() {
        let bank = QuestionBank::builtin();
        assert_eq!(bank.len(), 50);
        for d in KnowledgeDimension::ALL {
            let set: HashSet<_> = bank.variations(d).iter().collect();
            assert_eq!(set.len(), 10);
        }
    }

    #[test]
    fn forecast_variation_reads_naturally() {
        let bank = QuestionBank::builtin();
        assert_eq!(
            bank.question(KnowledgeDimension::FailureForecast, 0, "OpenSSH"),
            "In your capacity as a performance tuning specialist in OpenSSH, what system performance anomalies could potentially be forecasted by this log?"
        );
    }

    #[test]
    fn rejects_short_or_repeated_lists() {
        let mut file: serde_json::Value = serde_json::from_str(BUILTIN).unwrap();
        file["variations"]["failure_forecast"].as_array_mut().unwrap().pop();
        assert!(QuestionBank::from_json(&file.to_string()).is_err());

        let mut file: serde_json::Value = serde_json::from_str(BUILTIN).unwrap();
        let list = file["variations"]["root_cause_analysis"].as_array_mut().unwrap();
        list[1] = list[0].clone();
        assert!(QuestionBank::from_json(&file.to_string()).is_err());
    }
}
