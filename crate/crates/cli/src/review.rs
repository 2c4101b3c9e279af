//! calibrate-serve, build-dataset, stats.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, ValueEnum};
use logknow_core::calibration::CalibrationStore;
use logknow_core::dataset::{
    build_corpus, CorpusFormat, DatasetStats, TrainingConfig, TrainingPhase, REFERENCE_LOG_COUNTS,
};
use logknow_core::{QAPair, ReviewStatus};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::RwLock;

use crate::error::CliError;
use crate::io::{guard_outputs, read_jsonl, write_json};
use crate::Context;

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Review log (JSON lines); created if missing.
    #[arg(long)]
    db: PathBuf,
    /// Listen address.
    #[arg(long, env = "LOGKNOW_ADDR")]
    addr: Option<String>,
    /// Pending pairs to add before serving.
    #[arg(long, num_args = 1..)]
    enqueue: Vec<PathBuf>,
    /// Enqueue and exit without serving.
    #[arg(long)]
    no_serve: bool,
    /// Rewrite the review log as one line per pair before serving.
    #[arg(long)]
    compact: bool,
}

pub async fn serve(ctx: &Context, a: ServeArgs) -> Result<(), CliError> {
    guard_outputs(a.enqueue.iter().map(PathBuf::as_path), [a.db.as_path()])?;
    let mut store = CalibrationStore::open(&a.db).map_err(CliError::at(&a.db))?;
    for path in &a.enqueue {
        let pairs: Vec<QAPair> = read_jsonl(path)?;
        let summary = store.enqueue(&pairs)?;
        eprintln!("{}: {} new, {} already stored", path.display(), summary.inserted, summary.unchanged);
    }
    if a.compact {
        store.compact()?;
    }
    let stats = store.stats();
    println!("{}", json!({"pending": stats.pending, "accepted": stats.accepted, "rejected": stats.rejected}));
    if a.no_serve {
        return Ok(());
    }
    let addr = a
        .addr
        .or(ctx.file.serve.addr.clone())
        .unwrap_or_else(|| "127.0.0.1:8080".into());
    let listener = TcpListener::bind(&addr).await.map_err(|e| CliError::Io {
        path: addr.clone(),
        source: e,
    })?;
    let local = listener.local_addr().map_err(|e| CliError::Io { path: addr, source: e })?;
    println!("listening on http://{local}");
    let shared = Arc::new(RwLock::new(store));
    logknow_service::serve(listener, shared, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
    .map_err(|e| CliError::Io {
        path: local.to_string(),
        source: e,
    })
}

fn load_pairs(db: Option<&PathBuf>, pairs: &[PathBuf], status: Option<ReviewStatus>) -> Result<Vec<QAPair>, CliError> {
    let mut out = Vec::new();
    if let Some(db) = db {
        let store = CalibrationStore::read_only(db).map_err(CliError::at(db))?;
        match status {
            Some(s) => out.extend(store.export(s)),
            None => {
                for s in [ReviewStatus::Pending, ReviewStatus::Accepted, ReviewStatus::Rejected] {
                    out.extend(store.export(s));
                }
            }
        }
    }
    for path in pairs {
        let read: Vec<QAPair> = read_jsonl(path)?;
        out.extend(read.into_iter().filter(|p| status.is_none_or(|s| p.status == s)));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Cpt,
    Instruction,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PhaseArg {
    Cpt,
    SftTask,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Review log to export accepted pairs from.
    #[arg(long, required_unless_present = "pairs")]
    db: Option<PathBuf>,
    /// Accepted pairs as JSON lines (e.g. from /api/export).
    #[arg(long, num_args = 1..)]
    pairs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "instruction")]
    format: FormatArg,
    /// Corpus as JSON lines.
    #[arg(long)]
    out: PathBuf,
    /// Statistics as JSON.
    #[arg(long)]
    stats_out: Option<PathBuf>,
    /// Training configuration to emit alongside the corpus.
    #[arg(long)]
    training_config: Option<PathBuf>,
    /// Training phase for --training-config; follows --format by default.
    #[arg(long, value_enum)]
    phase: Option<PhaseArg>,
}

pub fn build(_ctx: &Context, a: BuildArgs) -> Result<(), CliError> {
    guard_outputs(
        a.db.iter().chain(&a.pairs).map(PathBuf::as_path),
        [Some(&a.out), a.stats_out.as_ref(), a.training_config.as_ref()]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path),
    )?;
    let mut accepted = load_pairs(a.db.as_ref(), &[], Some(ReviewStatus::Accepted))?;
    // explicit pair files must be accepted in full; build_corpus reports otherwise
    for path in &a.pairs {
        accepted.extend(read_jsonl::<QAPair>(path)?);
    }
    let format = match a.format {
        FormatArg::Cpt => CorpusFormat::Cpt,
        FormatArg::Instruction => CorpusFormat::Instruction,
    };
    let corpus = build_corpus(&accepted, format)?;
    corpus.write(&a.out)?;
    print!("{}", corpus.stats);
    if let Some(path) = &a.stats_out {
        write_json(path, &corpus.stats)?;
    }
    if let Some(path) = &a.training_config {
        let phase = match (a.phase, format) {
            (Some(PhaseArg::Cpt), _) | (None, CorpusFormat::Cpt) => TrainingPhase::Cpt,
            (Some(PhaseArg::SftTask), _) | (None, CorpusFormat::Instruction) => TrainingPhase::SftTask,
        };
        TrainingConfig::defaults(phase, &a.out, corpus.records.len()).write(path)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Review log.
    #[arg(long, conflicts_with = "reference")]
    db: Option<PathBuf>,
    /// Pairs as JSON lines.
    #[arg(long, num_args = 1.., conflicts_with = "reference")]
    pairs: Vec<PathBuf>,
    /// Only pairs with this status.
    #[arg(long)]
    status: Option<String>,
    /// Statistics of the published reference corpus counts.
    #[arg(long)]
    reference: bool,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

pub fn stats(_ctx: &Context, a: StatsArgs) -> Result<(), CliError> {
    let stats = if a.reference {
        DatasetStats::from_log_counts(&REFERENCE_LOG_COUNTS)
    } else {
        if a.db.is_none() && a.pairs.is_empty() {
            return Err(CliError::Usage("stats needs --db, --pairs or --reference".into()));
        }
        let status = a
            .status
            .as_deref()
            .map(str::parse::<ReviewStatus>)
            .transpose()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        DatasetStats::from_pairs(&load_pairs(a.db.as_ref(), &a.pairs, status)?)
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
    } else {
        print!("{stats}");
    }
    Ok(())
}
