//! Deduplication: split raw logs into templates and variable groups.
//!
//! Two extractors share one output contract (a [`TemplateStore`] whose groups
//! render back to their source lines exactly):
//!
//! * [`ingest_labeled`] aligns each log against a manually parsed gold template.
//! * [`mine`] is a fixed-depth prefix-tree miner: logs are bucketed by token
//!   count, routed down a path of leading tokens, and merged into the most
//!   similar cluster of the leaf (or start a new one).
//!
//! ```text
//!            len = 3
//!               |
//!            "send"          <- leading tokens (digit-bearing tokens route to <*>)
//!               |
//!             "<*>"
//!               |
//!    [send <*> bytes]        <- leaf clusters, compared by fixed-token similarity
//! ```

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LogTemplate, RawLogRecord, Source, TemplateId, VariableGroup, PLACEHOLDER, tokenize};
use crate::store::{StoreError, TemplateStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerConfig {
    /// Minimum fraction of positions whose fixed token must agree, in (0, 1].
    pub similarity_threshold: f64,
    /// Tree depth including the root and the token-count layer; >= 2.
    pub max_tree_depth: usize,
    /// Treat all-digit and hex-like tokens as variables up front.
    pub numeric_token_rule: bool,
}

impl Default for MinerConfig {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.5,
            max_tree_depth: 4,
            numeric_token_rule: true,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("similarity_threshold must be in (0, 1], got {0}")]
    Threshold(f64),
    #[error("max_tree_depth must be >= 2, got {0}")]
    Depth(usize),
}

impl MinerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            return Err(ConfigError::Threshold(self.similarity_threshold));
        }
        if self.max_tree_depth < 2 {
            return Err(ConfigError::Depth(self.max_tree_depth));
        }
        Ok(())
    }
}

/// All-digit (optionally signed) or hex-like (`0x1f`, `7fa3c2e0`) tokens.
pub fn is_numeric_like(token: &str) -> bool {
    let digits = token.strip_prefix('-').unwrap_or(token);
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        return true;
    }
    if let Some(hex) = token.strip_prefix("0x").or_else(|| token.strip_prefix("0X")) {
        return !hex.is_empty() && hex.bytes().all(|b| b.is_ascii_hexdigit());
    }
    token.len() >= 8
        && token.bytes().all(|b| b.is_ascii_hexdigit())
        && token.bytes().any(|b| b.is_ascii_digit())
}

/// Fraction of positions where the template's fixed token equals the log
/// token. Placeholders never count as agreement.
pub fn similarity(shape: &[Option<&str>], tokens: &[&str]) -> f64 {
    if shape.len() != tokens.len() || shape.is_empty() {
        return 0.0;
    }
    let same = shape
        .iter()
        .zip(tokens)
        .filter(|(t, tok)| t.is_some_and(|t| t == **tok))
        .count();
    same as f64 / shape.len() as f64
}

/// As [`similarity`], with placeholder positions counted as agreement.
pub fn match_similarity(shape: &[Option<&str>], tokens: &[&str]) -> f64 {
    if shape.len() != tokens.len() || shape.is_empty() {
        return 0.0;
    }
    let same = shape
        .iter()
        .zip(tokens)
        .filter(|(t, tok)| t.is_none_or(|t| t == **tok))
        .count();
    same as f64 / shape.len() as f64
}

fn compatible(shape: &[Option<&str>], tokens: &[&str]) -> bool {
    shape.len() == tokens.len()
        && shape
            .iter()
            .zip(tokens)
            .all(|(t, tok)| t.is_none_or(|t| t == *tok))
}

fn extract_values(shape: &[Option<String>], tokens: &[&str]) -> Vec<String> {
    shape
        .iter()
        .zip(tokens)
        .filter(|(t, _)| t.is_none())
        .map(|(_, tok)| (*tok).to_owned())
        .collect()
}

// ---------------------------------------------------------------------------
// Mining

struct Cluster {
    shape: Vec<Option<String>>,
    members: Vec<usize>,
}

impl Cluster {
    fn shape_ref(&self) -> Vec<Option<&str>> {
        self.shape.iter().map(Option::as_deref).collect()
    }
}

fn route_key(token: &str) -> String {
    if token.bytes().any(|b| b.is_ascii_digit()) {
        PLACEHOLDER.to_owned()
    } else {
        token.to_owned()
    }
}

fn mine_domain(
    domain: &str,
    records: &[&RawLogRecord],
    config: &MinerConfig,
    store: &mut TemplateStore,
) -> Result<(), StoreError> {
    let prefix_depth = config.max_tree_depth - 2;
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut leaves: HashMap<(usize, Vec<String>), Vec<usize>> = HashMap::new();
    let tokenized: Vec<Vec<&str>> = records.iter().map(|r| r.tokens()).collect();

    for (idx, tokens) in tokenized.iter().enumerate() {
        let path: Vec<String> = tokens.iter().take(prefix_depth).map(|t| route_key(t)).collect();
        let leaf = leaves.entry((tokens.len(), path)).or_default();

        let mut best: Option<(usize, f64)> = None;
        for &c in leaf.iter() {
            let sim = similarity(&clusters[c].shape_ref(), tokens);
            if best.is_none_or(|(_, s)| sim > s) {
                best = Some((c, sim));
            }
        }
        match best {
            Some((c, sim)) if sim >= config.similarity_threshold => {
                let cluster = &mut clusters[c];
                for (slot, tok) in cluster.shape.iter_mut().zip(tokens) {
                    if slot.as_deref().is_some_and(|t| t != *tok) {
                        *slot = None;
                    }
                }
                cluster.members.push(idx);
            }
            _ => {
                let shape = tokens
                    .iter()
                    .map(|t| {
                        if config.numeric_token_rule && is_numeric_like(t) {
                            None
                        } else {
                            Some((*t).to_owned())
                        }
                    })
                    .collect();
                leaf.push(clusters.len());
                clusters.push(Cluster {
                    shape,
                    members: vec![idx],
                });
            }
        }
    }

    // Clusters from different leaves can converge on the same shape.
    let mut merged: Vec<Cluster> = Vec::new();
    let mut by_shape: HashMap<Vec<Option<String>>, usize> = HashMap::new();
    for cluster in clusters {
        match by_shape.get(&cluster.shape) {
            Some(&into) => merged[into].members.extend(cluster.members),
            None => {
                by_shape.insert(cluster.shape.clone(), merged.len());
                merged.push(cluster);
            }
        }
    }

    for (ordinal, cluster) in merged.iter_mut().enumerate() {
        cluster.members.sort_unstable();
        let template = LogTemplate::from_shape(TemplateId::minted(domain, ordinal), domain, &cluster.shape);
        let id = template.id.clone();
        store.insert_template(template)?;
        for &m in &cluster.members {
            store.add_group(VariableGroup {
                template_id: id.clone(),
                values: extract_values(&cluster.shape, &tokenized[m]),
                source: records[m].source(),
            })?;
        }
    }
    Ok(())
}

/// Groups records by domain (first-appearance order) and mines each domain
/// independently. Deterministic for a fixed input order and config.
pub fn mine(records: &[RawLogRecord], config: &MinerConfig) -> Result<TemplateStore, MineError> {
    config.validate()?;
    let mut by_domain: Vec<(&str, Vec<&RawLogRecord>)> = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for record in records {
        let slot = *seen.entry(record.domain.as_str()).or_insert_with(|| {
            by_domain.push((record.domain.as_str(), Vec::new()));
            by_domain.len() - 1
        });
        by_domain[slot].1.push(record);
    }
    let mut store = TemplateStore::new();
    for (domain, recs) in by_domain {
        mine_domain(domain, &recs, config, &mut store)?;
    }
    Ok(store)
}

#[derive(Debug, Error)]
pub enum MineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

// ---------------------------------------------------------------------------
// Online matching

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("no template of domain `{domain}` matches line {line} at threshold {threshold}")]
    NoMatch {
        domain: String,
        line: u64,
        threshold: f64,
    },
}

/// Best template for `record`. Every fixed token must agree so the group
/// renders back exactly; placeholders count as agreement when checking the
/// threshold. Among candidates the most fixed-token overlap wins, ties go to
/// the lowest template id.
pub fn match_record(
    store: &TemplateStore,
    record: &RawLogRecord,
    config: &MinerConfig,
) -> Result<(TemplateId, VariableGroup), MatchError> {
    let tokens = record.tokens();
    let mut best: Option<(&LogTemplate, f64)> = None;
    for id in store.with_length(&record.domain, tokens.len()) {
        let template = store.template(id).expect("index points at stored templates");
        let shape = template.shape();
        if !compatible(&shape, &tokens) {
            continue;
        }
        if match_similarity(&shape, &tokens) < config.similarity_threshold {
            continue;
        }
        let sim = similarity(&shape, &tokens);
        if best.is_none_or(|(_, s)| sim > s) {
            best = Some((template, sim));
        }
    }
    let Some((template, _)) = best else {
        return Err(MatchError::NoMatch {
            domain: record.domain.clone(),
            line: record.line_no,
            threshold: config.similarity_threshold,
        });
    };
    let values = template
        .tokens
        .iter()
        .zip(&tokens)
        .filter(|(t, _)| t.is_placeholder())
        .map(|(_, tok)| (*tok).to_owned())
        .collect();
    Ok((
        template.id.clone(),
        VariableGroup {
            template_id: template.id.clone(),
            values,
            source: record.source(),
        },
    ))
}

// ---------------------------------------------------------------------------
// Ingesting manually parsed logs

/// One manually parsed log: its content and gold template string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledRow {
    pub domain: String,
    pub line: u64,
    pub content: String,
    pub template: String,
}

/// How gold template tokens may absorb content tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    /// Token counts must agree; each `<*>` absorbs exactly one token.
    #[default]
    Strict,
    /// A standalone `<*>` may absorb a run of tokens (tried shortest first,
    /// one token before zero).
    Flexible,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("line {} of {}: content does not align with gold template `{template}`", source_ref.line, source_ref.domain)]
pub struct AlignmentError {
    pub source_ref: Source,
    pub content: String,
    pub template: String,
}

/// Result of [`ingest_labeled`]: misaligned rows are reported, never dropped
/// silently.
#[derive(Debug)]
pub struct Ingested {
    pub store: TemplateStore,
    pub misaligned: Vec<AlignmentError>,
}

impl Ingested {
    /// Fails on the first misaligned row.
    pub fn into_strict(self) -> Result<TemplateStore, AlignmentError> {
        match self.misaligned.into_iter().next() {
            Some(err) => Err(err),
            None => Ok(self.store),
        }
    }
}

enum GoldToken<'a> {
    Fixed(&'a str),
    Slot,
    Glob(Vec<&'a str>),
}

fn classify(token: &str) -> GoldToken<'_> {
    if token == PLACEHOLDER {
        GoldToken::Slot
    } else if token.contains(PLACEHOLDER) {
        GoldToken::Glob(token.split(PLACEHOLDER).collect())
    } else {
        GoldToken::Fixed(token)
    }
}

/// Glob match where the pattern is `parts` joined by wildcards.
fn glob_match(parts: &[&str], text: &str) -> bool {
    let (first, rest) = match parts.split_first() {
        Some(split) => split,
        None => return text.is_empty(),
    };
    let Some(mut remaining) = text.strip_prefix(first) else {
        return false;
    };
    let Some((last, middle)) = rest.split_last() else {
        return remaining.is_empty();
    };
    for part in middle {
        match remaining.find(part) {
            Some(at) => remaining = &remaining[at + part.len()..],
            None => return false,
        }
    }
    remaining.len() >= last.len() && remaining.ends_with(last)
}

/// Token span of content each gold token covers, or `None` if no alignment.
fn align(gold: &[GoldToken<'_>], content: &[&str], mode: Alignment) -> Option<Vec<(usize, usize)>> {
    fn go(
        gold: &[GoldToken<'_>],
        content: &[&str],
        gi: usize,
        ci: usize,
        mode: Alignment,
        failed: &mut Vec<Vec<bool>>,
        spans: &mut Vec<(usize, usize)>,
    ) -> bool {
        if gi == gold.len() {
            return ci == content.len();
        }
        if failed[gi][ci] {
            return false;
        }
        let mut lengths: Vec<usize> = Vec::new();
        match &gold[gi] {
            GoldToken::Fixed(text) => {
                if content.get(ci) == Some(text) {
                    lengths.push(1);
                }
            }
            GoldToken::Glob(parts) => {
                if content.get(ci).is_some_and(|c| glob_match(parts, c)) {
                    lengths.push(1);
                }
            }
            GoldToken::Slot => match mode {
                Alignment::Strict => {
                    if ci < content.len() {
                        lengths.push(1);
                    }
                }
                Alignment::Flexible => {
                    lengths.extend(1..=content.len() - ci);
                    lengths.push(0);
                }
            },
        }
        for len in lengths {
            spans.push((ci, ci + len));
            if go(gold, content, gi + 1, ci + len, mode, failed, spans) {
                return true;
            }
            spans.pop();
        }
        failed[gi][ci] = true;
        false
    }

    if mode == Alignment::Strict && gold.len() != content.len() {
        return None;
    }
    let mut failed = vec![vec![false; content.len() + 1]; gold.len() + 1];
    let mut spans = Vec::with_capacity(gold.len());
    go(gold, content, 0, 0, mode, &mut failed, &mut spans).then_some(spans)
}

/// Builds a store from manually parsed logs. One template per distinct token
/// shape per domain, one group per aligned row.
pub fn ingest_labeled(rows: &[LabeledRow], mode: Alignment) -> Result<Ingested, StoreError> {
    let mut store = TemplateStore::new();
    let mut misaligned = Vec::new();
    let mut next_ordinal: BTreeMap<String, usize> = BTreeMap::new();

    for row in rows {
        let content: Vec<&str> = tokenize(&row.content);
        let gold_tokens: Vec<&str> = tokenize(&row.template);
        let gold: Vec<GoldToken<'_>> = gold_tokens.iter().map(|t| classify(t)).collect();
        let source = Source {
            domain: row.domain.clone(),
            line: row.line,
        };
        let spans = match (content.is_empty(), align(&gold, &content, mode)) {
            (false, Some(spans)) => spans,
            _ => {
                misaligned.push(AlignmentError {
                    source_ref: source,
                    content: row.content.clone(),
                    template: row.template.clone(),
                });
                continue;
            }
        };
        let shape: Vec<Option<String>> = gold
            .iter()
            .map(|g| match g {
                GoldToken::Fixed(text) => Some((*text).to_owned()),
                GoldToken::Slot | GoldToken::Glob(_) => None,
            })
            .collect();
        let values = gold
            .iter()
            .zip(&spans)
            .filter(|(g, _)| !matches!(g, GoldToken::Fixed(_)))
            .map(|(_, &(from, to))| content[from..to].join(" "))
            .collect();

        let id = match store.find_by_shape(&row.domain, &shape) {
            Some(t) => t.id.clone(),
            None => {
                let ordinal = next_ordinal.entry(row.domain.clone()).or_default();
                let template = LogTemplate::from_shape(TemplateId::minted(&row.domain, *ordinal), &row.domain, &shape);
                *ordinal += 1;
                let id = template.id.clone();
                store.insert_template(template)?;
                id
            }
        };
        store.add_group(VariableGroup {
            template_id: id,
            values,
            source,
        })?;
    }
    Ok(Ingested { store, misaligned })
}

// ---------------------------------------------------------------------------
// Reporting

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupRow {
    pub raw_count: usize,
    pub template_count: usize,
    /// `1 - template_count / raw_count`; 0 when nothing was ingested.
    pub reduction_ratio: f64,
}

impl DedupRow {
    fn new(raw_count: usize, template_count: usize) -> Self {
        let reduction_ratio = if raw_count == 0 {
            0.0
        } else {
            1.0 - template_count as f64 / raw_count as f64
        };
        Self {
            raw_count,
            template_count,
            reduction_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DedupReport {
    pub domains: BTreeMap<String, DedupRow>,
    pub total: Option<DedupRow>,
}

impl DedupReport {
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<16} {:>10} {:>10} {:>10}\n", "domain", "raw", "templates", "reduction");
        let rows = self.domains.iter().map(|(d, r)| (d.as_str(), r));
        for (name, row) in rows.chain(self.total.iter().map(|t| ("TOTAL", t))) {
            out += &format!(
                "{:<16} {:>10} {:>10} {:>9.3}%\n",
                name,
                row.raw_count,
                row.template_count,
                row.reduction_ratio * 100.0
            );
        }
        out
    }
}

pub fn dedup_report(store: &TemplateStore) -> DedupReport {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for template in store.templates() {
        let entry = counts.entry(template.domain.clone()).or_default();
        entry.0 += store.groups_of(&template.id).len();
        entry.1 += 1;
    }
    if counts.is_empty() {
        return DedupReport::default();
    }
    let (raw, templates) = counts
        .values()
        .fold((0, 0), |(r, t), (dr, dt)| (r + dr, t + dt));
    DedupReport {
        domains: counts
            .into_iter()
            .map(|(d, (r, t))| (d, DedupRow::new(r, t)))
            .collect(),
        total: Some(DedupRow::new(raw, templates)),
    }
}
