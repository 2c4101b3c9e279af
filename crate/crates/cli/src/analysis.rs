//! split, evaluate.

use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use logknow_core::dataset::{split_anomaly, split_parsing_fewshot, window_sessions, AnomalySplitConfig};
use logknow_core::eval::{detection_f1, parsing_report, rouge1, rouge_l, session_f1, ParsedLine, Prf, RougeScore};
use logknow_core::loader::{domain_from_path, load_structured, LoadError, StructuredRow};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::io::{guard_outputs, write_json, write_jsonl};
use crate::Context;

struct Table {
    headers: csv::StringRecord,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let wrap = |e: csv::Error| CliError::at(path)(LoadError::from(e));
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(wrap)?;
    let headers = reader.headers().map_err(wrap)?.clone();
    let rows = reader.records().collect::<Result<Vec<_>, _>>().map_err(wrap)?;
    Ok(Table { headers, rows })
}

fn write_table(path: &Path, headers: &csv::StringRecord, rows: &[csv::StringRecord]) -> Result<(), CliError> {
    let wrap = |e: csv::Error| CliError::at(path)(LoadError::from(e));
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    w.write_record(headers).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `-`, `0`, `normal`, `false` and empty mean normal; anything else is an anomaly.
fn is_anomalous(label: &str) -> bool {
    !matches!(label.trim().to_ascii_lowercase().as_str(), "" | "-" | "0" | "normal" | "false")
}

fn labels(path: &Path, column: &str) -> Result<(Table, Vec<bool>), CliError> {
    let table = read_table(path)?;
    let col = table
        .headers
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| CliError::Usage(format!("{} has no `{column}` column", path.display())))?;
    let labels = table.rows.iter().map(|r| is_anomalous(r.get(col).unwrap_or(""))).collect();
    Ok((table, labels))
}

#[derive(Debug, Subcommand)]
pub enum SplitCommand {
    /// First 10% of rows for training, the rest for testing.
    Parsing {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Stratified random split keeping the anomalous share.
    Anomaly {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "Label")]
        label_column: String,
        #[arg(long, default_value_t = 0.10)]
        train_frac: f64,
        /// Largest allowed anomalous-share gap in percentage points.
        #[arg(long, default_value_t = 2.0)]
        tolerance_pp: f64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Fixed windows of consecutive logs.
    Sessions {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "Label")]
        label_column: String,
        #[arg(long, default_value_t = 100)]
        window: usize,
        /// Sessions as JSON lines.
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn split(ctx: &Context, c: SplitCommand) -> Result<(), CliError> {
    match c {
        SplitCommand::Parsing { input, train_out, test_out } => {
            guard_outputs([input.as_path()], [train_out.as_path(), test_out.as_path()])?;
            let table = read_table(&input)?;
            let (train, test) = split_parsing_fewshot(&table.rows);
            write_table(&train_out, &table.headers, &train)?;
            write_table(&test_out, &table.headers, &test)?;
            println!("{}", json!({"train": train.len(), "test": test.len()}));
        }
        SplitCommand::Anomaly {
            input,
            label_column,
            train_frac,
            tolerance_pp,
            train_out,
            test_out,
        } => {
            guard_outputs([input.as_path()], [train_out.as_path(), test_out.as_path()])?;
            let (table, labels) = labels(&input, &label_column)?;
            let items: Vec<(csv::StringRecord, bool)> = table.rows.into_iter().zip(labels).collect();
            let config = AnomalySplitConfig { train_frac, tolerance_pp };
            let (train, test) = split_anomaly(&items, config, ctx.seed)?;
            let anomalous = |v: &[(csv::StringRecord, bool)]| v.iter().filter(|x| x.1).count();
            let rows = |v: Vec<(csv::StringRecord, bool)>| v.into_iter().map(|x| x.0).collect::<Vec<_>>();
            println!(
                "{}",
                json!({
                    "train": train.len(), "train_anomalous": anomalous(&train),
                    "test": test.len(), "test_anomalous": anomalous(&test),
                    "seed": ctx.seed,
                })
            );
            write_table(&train_out, &table.headers, &rows(train))?;
            write_table(&test_out, &table.headers, &rows(test))?;
        }
        SplitCommand::Sessions { input, label_column, window, out } => {
            guard_outputs([input.as_path()], [out.as_path()])?;
            let (_, labels) = labels(&input, &label_column)?;
            let items: Vec<((), bool)> = labels.into_iter().map(|l| ((), l)).collect();
            let sessions = window_sessions(&items, window)?;
            write_jsonl(&out, &sessions)?;
            println!(
                "{}",
                json!({
                    "sessions": sessions.len(),
                    "anomalous": sessions.iter().filter(|s| s.anomalous).count(),
                    "partial": sessions.iter().filter(|s| s.partial).count(),
                })
            );
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ParsingEval {
    /// Gold structured CSV files (EventTemplate column).
    #[arg(long, num_args = 1..)]
    gold: Vec<PathBuf>,
    /// Predictions, one file per --gold in the same order (Predicted or
    /// EventTemplate column). Omit to read a Predicted column from the gold files.
    #[arg(long, num_args = 1..)]
    pred: Vec<PathBuf>,
    /// Report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectionEval {
    /// Gold labels (CSV).
    #[arg(long)]
    gold: PathBuf,
    /// Predicted labels (CSV), row-aligned with --gold.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value = "Label")]
    label_column: String,
    /// Also score fixed windows of this many logs.
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RougeEval {
    /// Candidate texts: one per line, or JSON lines with --field.
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    references: PathBuf,
    /// JSON field holding the text when inputs are JSON lines.
    #[arg(long)]
    field: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum EvaluateCommand {
    /// RandIndex and token-level F1 per domain.
    Parsing(ParsingEval),
    /// Anomaly F1 per log and per session.
    Detection(DetectionEval),
    /// Mean ROUGE-1 and ROUGE-L over line-aligned texts.
    Rouge(RougeEval),
}

fn parsed_lines(domain: &str, gold: &[StructuredRow], pred: Option<&[StructuredRow]>, path: &Path) -> Result<Vec<ParsedLine>, CliError> {
    let missing = |what: &str, line: u64| CliError::Parse {
        path: path.display().to_string(),
        line: line as usize,
        message: format!("row has no {what}"),
    };
    if let Some(pred) = pred {
        if pred.len() != gold.len() {
            return Err(logknow_core::eval::EvalError::LengthMismatch { pred: pred.len(), gold: gold.len() }.into());
        }
    }
    gold.iter()
        .enumerate()
        .map(|(i, g)| {
            let gold_t = g.template.clone().ok_or_else(|| missing("EventTemplate", g.line))?;
            let predicted = match pred {
                Some(p) => {
                    let p = &p[i];
                    if p.line != g.line {
                        return Err(CliError::Parse {
                            path: path.display().to_string(),
                            line: i + 1,
                            message: format!("LineId {} does not match gold LineId {}", p.line, g.line),
                        });
                    }
                    p.predicted.clone().or(p.template.clone())
                }
                None => g.predicted.clone(),
            }
            .ok_or_else(|| missing("prediction", g.line))?;
            Ok(ParsedLine {
                domain: domain.to_owned(),
                predicted,
                gold: gold_t,
            })
        })
        .collect()
}

fn mean_prf(scores: &[RougeScore]) -> Value {
    let n = scores.len().max(1) as f64;
    let mean = |f: fn(&Prf) -> f64| scores.iter().map(|s| f(&s.prf)).sum::<f64>() / n;
    json!({"precision": mean(|p| p.precision), "recall": mean(|p| p.recall), "f1": mean(|p| p.f1)})
}

fn texts(path: &Path, field: Option<&str>) -> Result<Vec<String>, CliError> {
    let raw = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    raw.lines()
        .enumerate()
        .map(|(i, line)| match field {
            None => Ok(line.to_owned()),
            Some(f) => {
                let v: Value = serde_json::from_str(line).map_err(|e| CliError::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                v.get(f).and_then(Value::as_str).map(str::to_owned).ok_or_else(|| CliError::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: format!("no string field `{f}`"),
                })
            }
        })
        .collect()
}

pub fn evaluate(_ctx: &Context, c: EvaluateCommand) -> Result<(), CliError> {
    match c {
        EvaluateCommand::Parsing(a) => {
            if a.gold.is_empty() {
                return Err(CliError::Usage("evaluate parsing needs --gold".into()));
            }
            if !a.pred.is_empty() && a.pred.len() != a.gold.len() {
                return Err(CliError::Usage("give one --pred per --gold".into()));
            }
            if let Some(out) = &a.json {
                guard_outputs(a.gold.iter().chain(&a.pred).map(PathBuf::as_path), [out.as_path()])?;
            }
            let mut lines = Vec::new();
            for (i, gold_path) in a.gold.iter().enumerate() {
                let gold = load_structured(gold_path).map_err(CliError::at(gold_path))?;
                let pred = a.pred.get(i).map(|p| load_structured(p).map_err(CliError::at(p))).transpose()?;
                let path = a.pred.get(i).unwrap_or(gold_path);
                lines.extend(parsed_lines(&domain_from_path(gold_path), &gold, pred.as_deref(), path)?);
            }
            let report = parsing_report(&lines)?;
            print!("{report}");
            if let Some(out) = &a.json {
                write_json(out, &report)?;
            }
        }
        EvaluateCommand::Detection(a) => {
            let (_, gold) = labels(&a.gold, &a.label_column)?;
            let (_, pred) = labels(&a.pred, &a.label_column)?;
            let per_log = detection_f1(&pred, &gold)?;
            let mut out = json!({"log_level": per_log});
            if let Some(window) = a.window {
                let sessions = |l: &[bool]| -> Result<Vec<bool>, CliError> {
                    let items: Vec<((), bool)> = l.iter().map(|&x| ((), x)).collect();
                    Ok(window_sessions(&items, window)?.into_iter().map(|s| s.anomalous).collect())
                };
                out["session_level"] = json!(session_f1(&sessions(&pred)?, &sessions(&gold)?)?);
            }
            println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
        }
        EvaluateCommand::Rouge(a) => {
            let cand = texts(&a.candidates, a.field.as_deref())?;
            let refs = texts(&a.references, a.field.as_deref())?;
            if cand.len() != refs.len() {
                return Err(logknow_core::eval::EvalError::LengthMismatch { pred: cand.len(), gold: refs.len() }.into());
            }
            let r1: Vec<RougeScore> = cand.iter().zip(&refs).map(|(c, r)| rouge1(c, r)).collect();
            let rl: Vec<RougeScore> = cand.iter().zip(&refs).map(|(c, r)| rouge_l(c, r)).collect();
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "pairs": cand.len(),
                    "both_empty": r1.iter().filter(|s| s.both_empty).count(),
                    "rouge1": mean_prf(&r1),
                    "rougeL": mean_prf(&rl),
                }))
                .expect("serializable")
            );
        }
    }
    Ok(())
}
