//! Building blocks for turning raw logs into an interpretable question/answer
//! corpus, and for scoring log-analysis output.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! 1. [`miner`] collapses raw logs into templates plus per-log variable groups.
//! 2. [`reconstruct`] renders events back from `(template, group)` without loss.
//! 3. [`knowledge`] asks a text-generation service five questions per event.
//! 4. [`calibration`] persists the generated pairs for human accept/reject review.
//! 5. [`dataset`] emits the accepted corpus, statistics, splits and training configs.
//!
//! [`eval`] holds the metric stack (RandIndex, token-level F1, anomaly F1, ROUGE).

pub mod calibration;
pub mod dataset;
pub mod eval;
pub mod knowledge;
pub mod loader;
pub mod miner;
pub mod model;
pub mod reconstruct;
pub mod store;

pub use model::{
    tokenize, KnowledgeDimension, LogEvent, LogTemplate, QAPair, RawLogRecord, ReviewStatus,
    Source, TemplateId, Token, VariableGroup,
};
pub use store::TemplateStore;
