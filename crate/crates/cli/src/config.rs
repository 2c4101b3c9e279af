//! Optional TOML configuration file. Values here are the lowest-precedence
//! layer: command-line flags win over environment variables, which win over
//! the file.
//!
//! ```toml
//! seed = 7
//!
//! [miner]
//! similarity_threshold = 0.5
//! max_tree_depth = 4
//! numeric_token_rule = true
//!
//! [generation]
//! client = "http"
//! endpoint = "https://llm.example/v1/chat/completions"
//! model = "gpt-4"
//! timeout_ms = 60000
//! max_in_flight = 8
//! max_attempts = 4
//! base_delay_ms = 500
//! max_delay_ms = 30000
//!
//! [serve]
//! addr = "127.0.0.1:8080"
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub miner: MinerSection,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub serve: ServeSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinerSection {
    pub similarity_threshold: Option<f64>,
    pub max_tree_depth: Option<usize>,
    pub numeric_token_rule: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    pub client: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_ms: Option<u64>,
    pub max_in_flight: Option<usize>,
    pub max_attempts: Option<u32>,
    pub base_delay_ms: Option<u64>,
    pub max_delay_ms: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSection {
    pub addr: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
