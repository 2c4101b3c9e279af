//! Corpus emission, dataset statistics, experiment splits and training
//! configuration files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{KnowledgeDimension, QAPair, ReviewStatus};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no accepted pairs to build a corpus from")]
    EmptyCorpus,
    #[error("pair `{id}` is {status}, only accepted pairs enter the corpus")]
    NotAccepted { id: String, status: ReviewStatus },
    #[error("stratified split infeasible: {0}")]
    Infeasible(String),
    #[error("window must be >= 1")]
    ZeroWindow,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Published per-domain event counts of the reference corpus; every event
/// yields five pairs.
pub const REFERENCE_LOG_COUNTS: [(&str, u64); 14] = [
    ("OpenSSH", 54),
    ("HDFS", 409),
    ("HPC", 159),
    ("Windows", 9_605),
    ("Mac", 708),
    ("Thunderbird", 13_069),
    ("Spark", 369),
    ("Linux", 654),
    ("Zookeeper", 104),
    ("HealthApp", 195),
    ("Hadoop", 270),
    ("BGL", 607),
    ("Android", 25_369),
    ("Proxifier", 18),
];

// ---------------------------------------------------------------------------
// Corpus

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// `{text}` records for continual pre-training.
    Cpt,
    /// `{instruction, input, output}` records.
    Instruction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorpusRecord {
    Text {
        text: String,
    },
    Instruction {
        instruction: String,
        input: String,
        output: String,
    },
}

impl CorpusRecord {
    pub fn from_pair(pair: &QAPair, format: CorpusFormat) -> Self {
        match format {
            CorpusFormat::Cpt => CorpusRecord::Text {
                text: format!("{}\nLog: {}\n{}", pair.question, pair.log, pair.answer),
            },
            CorpusFormat::Instruction => CorpusRecord::Instruction {
                instruction: pair.question.clone(),
                input: pair.log.clone(),
                output: pair.answer.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub format: CorpusFormat,
    pub records: Vec<CorpusRecord>,
    pub stats: DatasetStats,
}

impl Corpus {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out += &serde_json::to_string(record).expect("records serialize");
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }
}

/// Emits accepted pairs in (domain, id) order; statistics are computed from
/// the emitted records.
pub fn build_corpus(pairs: &[QAPair], format: CorpusFormat) -> Result<Corpus, DatasetError> {
    if let Some(p) = pairs.iter().find(|p| p.status != ReviewStatus::Accepted) {
        return Err(DatasetError::NotAccepted {
            id: p.id.clone(),
            status: p.status,
        });
    }
    if pairs.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    let mut ordered: Vec<&QAPair> = pairs.iter().collect();
    ordered.sort_by(|a, b| (&a.domain, &a.id).cmp(&(&b.domain, &b.id)));
    let owned: Vec<QAPair> = ordered.iter().map(|p| (*p).clone()).collect();
    Ok(Corpus {
        format,
        records: ordered.iter().map(|p| CorpusRecord::from_pair(p, format)).collect(),
        stats: DatasetStats::from_pairs(&owned),
    })
}

// ---------------------------------------------------------------------------
// Statistics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub domain: String,
    pub log_count: u64,
    pub pair_count: u64,
    /// `pair_count / total_pairs * 100`, unrounded.
    pub proportion_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub rows: Vec<StatsRow>,
    pub total_logs: u64,
    pub total_pairs: u64,
    /// Pairs per dimension across all domains.
    #[serde(default)]
    pub per_dimension: BTreeMap<KnowledgeDimension, u64>,
}

impl DatasetStats {
    fn from_counts(counts: Vec<(String, u64, u64)>, per_dimension: BTreeMap<KnowledgeDimension, u64>) -> Self {
        let total_logs = counts.iter().map(|c| c.1).sum();
        let total_pairs: u64 = counts.iter().map(|c| c.2).sum();
        let rows = counts
            .into_iter()
            .map(|(domain, log_count, pair_count)| StatsRow {
                domain,
                log_count,
                pair_count,
                proportion_percent: if total_pairs == 0 {
                    0.0
                } else {
                    pair_count as f64 / total_pairs as f64 * 100.0
                },
            })
            .collect();
        Self {
            rows,
            total_logs,
            total_pairs,
            per_dimension,
        }
    }

    /// Log count = distinct source events per domain; rows ordered by domain.
    pub fn from_pairs(pairs: &[QAPair]) -> Self {
        let mut events: BTreeMap<&str, BTreeSet<(&crate::model::TemplateId, &crate::model::Source)>> = BTreeMap::new();
        let mut pair_counts: BTreeMap<&str, u64> = BTreeMap::new();
        let mut per_dimension = BTreeMap::new();
        for p in pairs {
            events.entry(&p.domain).or_default().insert((&p.template_id, &p.source));
            *pair_counts.entry(&p.domain).or_default() += 1;
            *per_dimension.entry(p.dimension).or_default() += 1;
        }
        let counts = events
            .into_iter()
            .map(|(d, e)| (d.to_owned(), e.len() as u64, pair_counts[d]))
            .collect();
        Self::from_counts(counts, per_dimension)
    }

    /// Statistics of a complete run in which every event yielded all five
    /// pairs; rows keep the input order.
    pub fn from_log_counts<S: AsRef<str>>(counts: &[(S, u64)]) -> Self {
        let dims = KnowledgeDimension::ALL.len() as u64;
        let total: u64 = counts.iter().map(|c| c.1).sum();
        let per_dimension = KnowledgeDimension::ALL.into_iter().map(|d| (d, total)).collect();
        Self::from_counts(
            counts
                .iter()
                .map(|(d, logs)| (d.as_ref().to_owned(), *logs, logs * dims))
                .collect(),
            per_dimension,
        )
    }

    pub fn proportion_sum(&self) -> f64 {
        self.rows.iter().map(|r| r.proportion_percent).sum()
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:>10} {:>12} {:>11}", "Domain", "Log Count", "Q&A Pairs", "Proportion")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<14} {:>10} {:>12} {:>10.2}%",
                r.domain, r.log_count, r.pair_count, r.proportion_percent
            )?;
        }
        writeln!(
            f,
            "{:<14} {:>10} {:>12} {:>10.2}%",
            "Total",
            self.total_logs,
            self.total_pairs,
            self.proportion_sum()
        )
    }
}

// ---------------------------------------------------------------------------
// Splits

/// First `floor(N / 10)` rows for training, the rest for testing; order kept.
pub fn split_parsing_fewshot<T: Clone>(rows: &[T]) -> (Vec<T>, Vec<T>) {
    let cut = rows.len() / 10;
    (rows[..cut].to_vec(), rows[cut..].to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalySplitConfig {
    pub train_frac: f64,
    /// Largest allowed gap between the train and full-set anomalous share,
    /// in percentage points.
    pub tolerance_pp: f64,
}

impl Default for AnomalySplitConfig {
    fn default() -> Self {
        Self {
            train_frac: 0.10,
            tolerance_pp: 2.0,
        }
    }
}

/// Stratified random split of labelled items (`true` = anomalous). Train
/// holds `round(train_frac * N)` items with the anomalous share of the full
/// set; both halves keep input order.
pub fn split_anomaly<T: Clone>(
    items: &[(T, bool)],
    config: AnomalySplitConfig,
    seed: u64,
) -> Result<(Vec<(T, bool)>, Vec<(T, bool)>), DatasetError> {
    let n = items.len();
    let train_size = (config.train_frac * n as f64).round() as usize;
    let anomalous: Vec<usize> = (0..n).filter(|&i| items[i].1).collect();
    let normal: Vec<usize> = (0..n).filter(|&i| !items[i].1).collect();
    if n == 0 || train_size == 0 {
        return Err(DatasetError::Infeasible(format!(
            "train size round({} * {n}) is 0",
            config.train_frac
        )));
    }
    let full_share = anomalous.len() as f64 / n as f64;
    let train_anomalous = (train_size as f64 * full_share).round() as usize;
    let train_normal = train_size - train_anomalous;
    if train_anomalous > anomalous.len() || train_normal > normal.len() {
        return Err(DatasetError::Infeasible(format!(
            "need {train_anomalous} anomalous / {train_normal} normal, have {} / {}",
            anomalous.len(),
            normal.len()
        )));
    }
    let train_share = train_anomalous as f64 / train_size as f64;
    let gap = (train_share - full_share).abs() * 100.0;
    if gap > config.tolerance_pp {
        return Err(DatasetError::Infeasible(format!(
            "train of {train_size} can hold {train_anomalous} anomalous ({:.2}%), full set has {:.2}%",
            train_share * 100.0,
            full_share * 100.0
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; n];
    for (stratum, take) in [(anomalous, train_anomalous), (normal, train_normal)] {
        for &i in stratum.choose_multiple(&mut rng, take) {
            chosen[i] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = items.iter().cloned().zip(chosen).partition(|(_, c)| *c);
    Ok((
        train.into_iter().map(|(x, _)| x).collect(),
        test.into_iter().map(|(x, _)| x).collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub index: usize,
    /// Offset of the first log in the input.
    pub start: usize,
    pub len: usize,
    pub anomalous: bool,
    /// Shorter than the window (only ever the last session).
    pub partial: bool,
}

/// Consecutive non-overlapping windows; a session is anomalous iff any of
/// its logs is.
pub fn window_sessions<T>(logs: &[(T, bool)], window: usize) -> Result<Vec<Session>, DatasetError> {
    if window == 0 {
        return Err(DatasetError::ZeroWindow);
    }
    Ok(logs
        .chunks(window)
        .enumerate()
        .map(|(index, chunk)| Session {
            index,
            start: index * window,
            len: chunk.len(),
            anomalous: chunk.iter().any(|(_, label)| *label),
            partial: chunk.len() < window,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Training configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingPhase {
    Cpt,
    SftTask,
    SftGeneral,
}

impl fmt::Display for TrainingPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainingPhase::Cpt => "cpt",
            TrainingPhase::SftTask => "sft_task",
            TrainingPhase::SftGeneral => "sft_general",
        })
    }
}

/// Size of the general instruction-following set used for zero-shot SFT.
pub const GENERAL_INSTRUCTION_EXAMPLES: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub phase: TrainingPhase,
    pub learning_rate: f64,
    pub epochs: f64,
    /// `None` leaves the trainer default in place.
    pub batch_size: Option<u32>,
    pub corpus_path: PathBuf,
    pub record_count: usize,
}

impl TrainingConfig {
    pub fn defaults(phase: TrainingPhase, corpus_path: impl Into<PathBuf>, record_count: usize) -> Self {
        let (epochs, batch_size) = match phase {
            TrainingPhase::Cpt => (1.5, Some(16)),
            TrainingPhase::SftTask | TrainingPhase::SftGeneral => (3.0, None),
        };
        Self {
            phase,
            learning_rate: 1e-5,
            epochs,
            batch_size,
            corpus_path: corpus_path.into(),
            record_count,
        }
    }

    /// General SFT runs on the fixed 1,000-example instruction set.
    pub fn sft_general(corpus_path: impl Into<PathBuf>) -> Self {
        Self::defaults(TrainingPhase::SftGeneral, corpus_path, GENERAL_INSTRUCTION_EXAMPLES)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
