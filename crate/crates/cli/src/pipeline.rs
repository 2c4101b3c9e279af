//! mine, match, reconstruct, generate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use clap::{Args, ValueEnum};
use logknow_core::knowledge::{
    auto_validate, MockClient, RecordingClient, ReplayClient, RetryPolicy, TextGenClient, Validation,
    ValidatorConfig, Generator,
};
use logknow_core::loader::{domain_from_path, labeled_rows, load_structured, load_text, LogFormat};
use logknow_core::miner::{self, dedup_report, ingest_labeled, match_record, Alignment, MinerConfig};
use logknow_core::reconstruct::{render_event, sample_events, EventRecord};
use logknow_core::{LogEvent, QAPair, RawLogRecord, TemplateStore};
use logknow_service::{ChatClient, ChatConfig};
use serde_json::json;

use crate::error::CliError;
use crate::io::{guard_outputs, read_jsonl, write_json, write_jsonl};
use crate::Context;

#[derive(Debug, Args)]
pub struct MinerFlags {
    /// Fraction of positions whose fixed token must agree, in (0, 1].
    #[arg(long, env = "LOGKNOW_SIMILARITY_THRESHOLD")]
    similarity_threshold: Option<f64>,
    /// Prefix-tree depth including the root and length layers (>= 2).
    #[arg(long, env = "LOGKNOW_MAX_TREE_DEPTH")]
    max_tree_depth: Option<usize>,
    /// Do not pre-generalize numeric and hex tokens.
    #[arg(long)]
    no_numeric_rule: bool,
}

impl MinerFlags {
    fn resolve(&self, ctx: &Context) -> MinerConfig {
        let file = &ctx.file.miner;
        let default = MinerConfig::default();
        MinerConfig {
            similarity_threshold: self
                .similarity_threshold
                .or(file.similarity_threshold)
                .unwrap_or(default.similarity_threshold),
            max_tree_depth: self.max_tree_depth.or(file.max_tree_depth).unwrap_or(default.max_tree_depth),
            numeric_token_rule: !self.no_numeric_rule && file.numeric_token_rule.unwrap_or(default.numeric_token_rule),
        }
    }
}

#[derive(Debug, Args)]
pub struct InputFlags {
    /// Plain-text logs (one per line) or Loghub structured CSV files.
    #[arg(long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Domain name; defaults to the file-name prefix (`Linux_2k.log` gives `Linux`).
    #[arg(long)]
    domain: Option<String>,
    /// Header layout of plain-text logs, e.g. `<Date> <Time> <Level>: <Content>`.
    #[arg(long)]
    log_format: Option<String>,
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

impl InputFlags {
    fn domain_of(&self, path: &Path) -> String {
        self.domain.clone().unwrap_or_else(|| domain_from_path(path))
    }

    /// Raw records of every input, plus (path, line, reason) for skipped lines.
    fn records(&self) -> Result<(Vec<RawLogRecord>, Vec<(String, u64, String)>), CliError> {
        let format = self.log_format.as_deref().map(LogFormat::parse).transpose()?;
        let mut records = Vec::new();
        let mut skipped = Vec::new();
        for path in &self.inputs {
            let domain = self.domain_of(path);
            if is_csv(path) {
                for row in load_structured(path).map_err(CliError::at(path))? {
                    match RawLogRecord::new(domain.as_str(), row.line, row.content) {
                        Ok(r) => records.push(r),
                        Err(e) => skipped.push((path.display().to_string(), row.line, e.to_string())),
                    }
                }
            } else {
                let loaded = load_text(path, &domain, format.as_ref()).map_err(CliError::at(path))?;
                records.extend(loaded.records);
                skipped.extend(loaded.skipped.into_iter().map(|(l, why)| (path.display().to_string(), l, why)));
            }
        }
        Ok((records, skipped))
    }
}

fn report_skipped(skipped: &[(String, u64, String)]) {
    for (path, line, why) in skipped {
        tracing::warn!(%path, line, reason = %why, "skipped line");
    }
    if !skipped.is_empty() {
        eprintln!("skipped {} unusable line(s)", skipped.len());
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlignmentArg {
    Strict,
    Flexible,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[command(flatten)]
    input: InputFlags,
    /// Take templates from the EventTemplate column instead of mining.
    #[arg(long)]
    labeled: bool,
    /// How gold `<*>` tokens absorb content tokens (with --labeled).
    #[arg(long, value_enum, default_value = "strict")]
    alignment: AlignmentArg,
    #[command(flatten)]
    miner: MinerFlags,
    /// Template store to write.
    #[arg(long)]
    out: PathBuf,
    /// Dedup report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Rows whose content does not fit their gold template, as JSON lines.
    #[arg(long)]
    rejects: Option<PathBuf>,
}

pub fn mine(ctx: &Context, a: MineArgs) -> Result<(), CliError> {
    guard_outputs(
        a.input.inputs.iter().map(PathBuf::as_path),
        [Some(&a.out), a.report.as_ref(), a.rejects.as_ref()].into_iter().flatten().map(PathBuf::as_path),
    )?;
    let store = if a.labeled {
        let mut rows = Vec::new();
        for path in &a.input.inputs {
            if !is_csv(path) {
                return Err(CliError::Usage(format!("--labeled needs structured CSV input, got {}", path.display())));
            }
            rows.extend(labeled_rows(&a.input.domain_of(path), &load_structured(path).map_err(CliError::at(path))?)?);
        }
        let mode = match a.alignment {
            AlignmentArg::Strict => Alignment::Strict,
            AlignmentArg::Flexible => Alignment::Flexible,
        };
        let ingested = ingest_labeled(&rows, mode)?;
        if !ingested.misaligned.is_empty() {
            eprintln!("{} row(s) do not align with their gold template", ingested.misaligned.len());
            if let Some(path) = &a.rejects {
                let lines: Vec<_> = ingested
                    .misaligned
                    .iter()
                    .map(|m| json!({"domain": m.source_ref.domain, "line": m.source_ref.line, "content": m.content, "template": m.template}))
                    .collect();
                write_jsonl(path, &lines)?;
            }
        }
        ingested.store
    } else {
        let (records, skipped) = a.input.records()?;
        report_skipped(&skipped);
        miner::mine(&records, &a.miner.resolve(ctx))?
    };
    store.save(&a.out)?;
    let report = dedup_report(&store);
    print!("{}", report.to_table());
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Template store to match against.
    #[arg(long)]
    store: PathBuf,
    #[command(flatten)]
    input: InputFlags,
    #[command(flatten)]
    miner: MinerFlags,
    /// Matched events as JSON lines.
    #[arg(long)]
    out: PathBuf,
    /// Unmatched lines as JSON lines.
    #[arg(long)]
    unmatched: Option<PathBuf>,
}

pub fn match_logs(ctx: &Context, a: MatchArgs) -> Result<(), CliError> {
    guard_outputs(
        a.input.inputs.iter().chain([&a.store]).map(PathBuf::as_path),
        [Some(&a.out), a.unmatched.as_ref()].into_iter().flatten().map(PathBuf::as_path),
    )?;
    let store = TemplateStore::load(&a.store).map_err(CliError::at(&a.store))?;
    let config = a.miner.resolve(ctx);
    let (records, skipped) = a.input.records()?;
    report_skipped(&skipped);
    let mut events = Vec::new();
    let mut misses = Vec::new();
    for record in &records {
        match match_record(&store, record, &config) {
            Ok((id, group)) => {
                let template = store.template(&id).expect("matched template exists");
                let event = render_event(template, &group).expect("matched group renders");
                events.push(EventRecord::from(&event));
            }
            Err(e) => misses.push(json!({"domain": record.domain, "line": record.line_no, "content": record.content, "error": e.to_string()})),
        }
    }
    write_jsonl(&a.out, &events)?;
    if let Some(path) = &a.unmatched {
        write_jsonl(path, &misses)?;
    }
    println!("{}", json!({"matched": events.len(), "unmatched": misses.len(), "skipped": skipped.len()}));
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    store: PathBuf,
    /// Events as JSON lines.
    #[arg(long)]
    out: PathBuf,
    /// Groups drawn per template.
    #[arg(long, default_value_t = 1)]
    per_template: usize,
    /// Render every group instead of sampling.
    #[arg(long, conflicts_with = "per_template")]
    all: bool,
}

pub fn reconstruct(ctx: &Context, a: ReconstructArgs) -> Result<(), CliError> {
    guard_outputs([a.store.as_path()], [a.out.as_path()])?;
    let store = TemplateStore::load(&a.store).map_err(CliError::at(&a.store))?;
    let events: Vec<LogEvent> = if a.all {
        store
            .templates()
            .flat_map(|t| store.groups_of(&t.id).iter().map(move |g| render_event(t, g).expect("store invariant")))
            .collect()
    } else {
        sample_events(&store, a.per_template, ctx.seed)
    };
    let records: Vec<EventRecord> = events.iter().map(EventRecord::from).collect();
    write_jsonl(&a.out, &records)?;
    println!("{}", json!({"events": records.len(), "templates": store.template_count()}));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClientKind {
    Mock,
    Replay,
    Http,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Sample events from this template store.
    #[arg(long, conflicts_with_all = ["events", "regenerate"])]
    store: Option<PathBuf>,
    /// Events (JSON lines from `reconstruct` or `match`).
    #[arg(long, conflicts_with = "regenerate")]
    events: Option<PathBuf>,
    /// Re-ask the questions behind previously flagged pairs.
    #[arg(long)]
    regenerate: Option<PathBuf>,
    /// Regeneration round; each round draws a fresh question variation.
    #[arg(long, default_value_t = 1)]
    round: u64,
    /// Groups sampled per template (with --store).
    #[arg(long, default_value_t = 1)]
    per_template: usize,
    #[arg(long, value_enum, env = "LOGKNOW_CLIENT")]
    client: Option<ClientKind>,
    /// Recorded answers for --client replay.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Write every answer to a replay file.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Chat-completions URL for --client http.
    #[arg(long, env = "LOGKNOW_ENDPOINT")]
    endpoint: Option<String>,
    /// Model name sent to the service and stamped into provenance.
    #[arg(long, env = "LOGKNOW_MODEL")]
    model: Option<String>,
    #[arg(long, env = "LOGKNOW_MAX_IN_FLIGHT")]
    max_in_flight: Option<usize>,
    #[arg(long, env = "LOGKNOW_MAX_ATTEMPTS")]
    max_attempts: Option<u32>,
    /// Per-request timeout in milliseconds (http client).
    #[arg(long, env = "LOGKNOW_TIMEOUT_MS")]
    timeout_ms: Option<u64>,
    /// Provenance timestamp (RFC 3339). Defaults to SOURCE_DATE_EPOCH, then
    /// the Unix epoch when a seed is given, else the current time.
    #[arg(long)]
    timestamp: Option<DateTime<Utc>>,
    /// Pending pairs that passed the automatic checks, as JSON lines.
    #[arg(long)]
    out: PathBuf,
    /// Pairs that failed the automatic checks (reason in `review_note`).
    #[arg(long)]
    flagged: Option<PathBuf>,
    /// Jobs that failed after all retries.
    #[arg(long)]
    failures: Option<PathBuf>,
}

fn provenance_time(a: &GenerateArgs, ctx: &Context) -> Result<DateTime<Utc>, CliError> {
    if let Some(t) = a.timestamp {
        return Ok(t);
    }
    if let Ok(raw) = std::env::var("SOURCE_DATE_EPOCH") {
        let secs: i64 = raw
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("SOURCE_DATE_EPOCH `{raw}` is not an integer")))?;
        return DateTime::from_timestamp(secs, 0)
            .ok_or_else(|| CliError::Config(format!("SOURCE_DATE_EPOCH `{raw}` out of range")));
    }
    Ok(if ctx.seed_given { DateTime::UNIX_EPOCH } else { Utc::now() })
}

fn build_client(a: &GenerateArgs, ctx: &Context) -> Result<(Arc<dyn TextGenClient>, Option<Arc<ReplayClient>>), CliError> {
    let file = &ctx.file.generation;
    let kind = match (a.client, file.client.as_deref()) {
        (Some(k), _) => k,
        (None, Some(name)) => ClientKind::from_str(name, true).map_err(|_| CliError::Config(format!("unknown client `{name}`")))?,
        (None, None) => ClientKind::Mock,
    };
    let model = a.model.clone().or(file.model.clone());
    match kind {
        ClientKind::Mock => {
            let client = match model {
                Some(m) => MockClient::named(m),
                None => MockClient::new(),
            };
            Ok((Arc::new(client), None))
        }
        ClientKind::Replay => {
            let path = a.replay.as_ref().ok_or_else(|| CliError::Usage("--client replay needs --replay <file>".into()))?;
            let client = Arc::new(ReplayClient::load(model.unwrap_or_else(|| "replay".into()), path).map_err(|e| CliError::io(path, e))?);
            Ok((client.clone(), Some(client)))
        }
        ClientKind::Http => {
            let endpoint = a
                .endpoint
                .clone()
                .or(file.endpoint.clone())
                .ok_or_else(|| CliError::Usage("--client http needs --endpoint (or LOGKNOW_ENDPOINT)".into()))?;
            let model = model.ok_or_else(|| CliError::Usage("--client http needs --model (or LOGKNOW_MODEL)".into()))?;
            let mut config = ChatConfig::new(endpoint, model);
            config.token = std::env::var("LOGKNOW_API_TOKEN").ok().filter(|t| !t.is_empty());
            if let Some(ms) = a.timeout_ms.or(file.timeout_ms) {
                config.timeout = Duration::from_millis(ms);
            }
            if let Some(n) = a.max_in_flight.or(file.max_in_flight) {
                config.max_in_flight = n;
            }
            Ok((Arc::new(ChatClient::new(config)?), None))
        }
    }
}

pub async fn generate(ctx: &Context, a: GenerateArgs) -> Result<(), CliError> {
    let inputs = [a.store.as_ref(), a.events.as_ref(), a.regenerate.as_ref(), a.replay.as_ref()];
    let outputs = [Some(&a.out), a.flagged.as_ref(), a.failures.as_ref(), a.record.as_ref()];
    guard_outputs(
        inputs.into_iter().flatten().map(PathBuf::as_path),
        outputs.into_iter().flatten().map(PathBuf::as_path),
    )?;

    let file = &ctx.file.generation;
    let mut generator = Generator::new(provenance_time(&a, ctx)?);
    let mut retry = RetryPolicy::default();
    if let Some(n) = a.max_attempts.or(file.max_attempts) {
        retry.max_attempts = n;
    }
    if let Some(ms) = file.base_delay_ms {
        retry.base_delay = Duration::from_millis(ms);
    }
    if let Some(ms) = file.max_delay_ms {
        retry.max_delay = Duration::from_millis(ms);
    }
    generator.retry = retry;
    if let Some(n) = a.max_in_flight.or(file.max_in_flight) {
        generator.max_in_flight = n;
    }

    let (client, replay) = build_client(&a, ctx)?;
    let recorder = a.record.as_ref().map(|_| Arc::new(RecordingClient::new(client.clone())));
    let active: Arc<dyn TextGenClient> = match &recorder {
        Some(r) => r.clone(),
        None => client,
    };

    let (outcome, event_count) = if let Some(path) = &a.regenerate {
        let pairs: Vec<QAPair> = read_jsonl(path)?;
        let outcome = generator.regenerate(&pairs, &active, ctx.seed, a.round).await?;
        (outcome, pairs.len())
    } else {
        let events: Vec<LogEvent> = match (&a.store, &a.events) {
            (Some(store), _) => sample_events(&TemplateStore::load(store).map_err(CliError::at(store))?, a.per_template, ctx.seed),
            (None, Some(events)) => read_jsonl::<EventRecord>(events)?.into_iter().map(LogEvent::from).collect(),
            (None, None) => return Err(CliError::Usage("one of --store, --events or --regenerate is required".into())),
        };
        (generator.generate_all(&events, &active, ctx.seed).await?, events.len())
    };

    let validator = ValidatorConfig::default();
    let mut kept = Vec::new();
    let mut flagged = Vec::new();
    for mut pair in outcome.pairs {
        match auto_validate(&pair, &validator) {
            Validation::Valid => kept.push(pair),
            Validation::Flagged(reason) => {
                pair.review_note = Some(format!("auto-flag: {reason}"));
                flagged.push(pair);
            }
        }
    }
    write_jsonl(&a.out, &kept)?;
    if let Some(path) = &a.flagged {
        write_jsonl(path, &flagged)?;
    } else if !flagged.is_empty() {
        eprintln!("{} flagged pair(s) dropped; pass --flagged to keep them", flagged.len());
    }
    if let Some(path) = &a.failures {
        write_jsonl(path, &outcome.failures)?;
    }
    if let (Some(path), Some(rec)) = (&a.record, &recorder) {
        write_jsonl(path, &rec.entries())?;
    }

    let mut per_dimension: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &kept {
        *per_dimension.entry(p.dimension.slug()).or_default() += 1;
    }
    let max_attempts = kept.iter().map(|p| p.provenance.attempts).max().unwrap_or(0);
    println!(
        "{}",
        json!({
            "events": event_count,
            "pairs": kept.len(),
            "flagged": flagged.len(),
            "failures": outcome.failures.len(),
            "per_dimension": per_dimension,
            "max_attempts": max_attempts,
            "replay_lookups": replay.map(|r| r.lookups()),
        })
    );
    for f in &outcome.failures {
        eprintln!(
            "failed: {} {} {} after {} attempt(s): {}",
            f.template_id, f.source, f.dimension.slug(), f.attempts, f.cause
        );
    }
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Incomplete(format!("{} generation job(s) failed after retries", outcome.failures.len())))
    }
}
