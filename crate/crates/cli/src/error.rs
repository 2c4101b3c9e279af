use std::path::Path;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Load(#[from] logknow_core::loader::LoadError),
    #[error("{path}: {source}")]
    At {
        path: String,
        source: Box<CliError>,
    },
    #[error("{0}")]
    Store(#[from] logknow_core::store::StoreError),
    #[error("{0}")]
    Mine(#[from] logknow_core::miner::MineError),
    #[error("{0}")]
    Knowledge(#[from] logknow_core::knowledge::KnowledgeError),
    #[error("{0}")]
    Client(#[from] logknow_core::knowledge::ClientError),
    #[error("{0}")]
    Calibration(#[from] logknow_core::calibration::CalibrationError),
    #[error("{0}")]
    Dataset(#[from] logknow_core::dataset::DatasetError),
    #[error("{0}")]
    Eval(#[from] logknow_core::eval::EvalError),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Incomplete(String),
}

impl CliError {
    /// Prefixes an error with the file it concerns.
    pub fn at<E: Into<CliError>>(path: &Path) -> impl FnOnce(E) -> Self + '_ {
        move |source| CliError::At {
            path: path.display().to_string(),
            source: Box::new(source.into()),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::Load(_) => "load",
            CliError::At { source, .. } => source.kind(),
            CliError::Store(_) => "store",
            CliError::Mine(_) => "mine",
            CliError::Knowledge(_) => "knowledge",
            CliError::Client(_) => "client",
            CliError::Calibration(_) => "calibration",
            CliError::Dataset(_) => "dataset",
            CliError::Eval(_) => "eval",
            CliError::Parse { .. } => "parse",
            CliError::Incomplete(_) => "incomplete",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Incomplete(_) => 3,
            _ => 1,
        }
    }

    /// Single-line JSON for stderr.
    pub fn line(&self) -> String {
        json!({ "error": self.to_string(), "kind": self.kind() }).to_string()
    }
}
