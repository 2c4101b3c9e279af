//! Durable store behind the human review phase.
//!
//! State lives in a single JSON-lines append log. Every enqueue batch and
//! every verdict is one or more complete lines, flushed and synced before the
//! call returns, so a pair can never carry a verdict while still reading
//! `pending`. A torn final line (crash mid-write) is dropped on open.
//! Compaction rewrites the log as one snapshot line per pair via a temporary
//! file and an atomic rename.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{QAPair, ReviewStatus};

pub const MAX_PAGE_SIZE: usize = 500;
const COMPACT_AFTER: usize = 10_000;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("pair id `{0}` already stored with different content")]
    DuplicateId(String),
    #[error("pair `{0}` not found")]
    NotFound(String),
    #[error("page_size must be in [1, {MAX_PAGE_SIZE}], got {0}")]
    PageSize(usize),
    #[error("page numbers start at 1")]
    Page,
    #[error("review log line {line} is corrupt: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

impl Verdict {
    pub fn status(self) -> ReviewStatus {
        match self {
            Verdict::Accept => ReviewStatus::Accepted,
            Verdict::Reject => ReviewStatus::Rejected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewVerdict {
    pub pair_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: Option<String>,
    pub reviewer: String,
    pub reviewed_at: DateTime<Utc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Entry {
    Enqueue { pair: QAPair },
    Review { verdict: ReviewVerdict },
    Snapshot { pair: QAPair, verdicts: Vec<ReviewVerdict> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub pending: usize,
    pub accepted: usize,
    pub rejected: usize,
}

impl StatusCounts {
    fn bump(&mut self, status: ReviewStatus) {
        match status {
            ReviewStatus::Pending => self.pending += 1,
            ReviewStatus::Accepted => self.accepted += 1,
            ReviewStatus::Rejected => self.rejected += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.pending + self.accepted + self.rejected
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub pending: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub per_domain: BTreeMap<String, StatusCounts>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub items: Vec<QAPair>,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnqueueSummary {
    pub inserted: usize,
    /// Identical pairs that were already stored.
    pub unchanged: usize,
}

#[derive(Debug, Default)]
pub struct CalibrationStore {
    // keyed by (domain, id) so iteration is already in listing order
    pairs: BTreeMap<(String, String), QAPair>,
    domain_of: BTreeMap<String, String>,
    archive: BTreeMap<String, Vec<ReviewVerdict>>,
    file: Option<(PathBuf, File)>,
    appended: usize,
}

impl CalibrationStore {
    /// Store without persistence.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) the review log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CalibrationError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let (mut store, good_len) = Self::replay(&file)?;
        if let Some(good_len) = good_len {
            tracing::warn!(path = %path.display(), "dropping torn final line of review log");
            file.set_len(good_len)?;
            file.seek(SeekFrom::End(0))?;
        }
        store.file = Some((path, file));
        Ok(store)
    }

    /// Reads the review log without modifying it; a torn final line is
    /// ignored. The returned store does not persist changes.
    pub fn read_only(path: impl AsRef<Path>) -> Result<Self, CalibrationError> {
        Ok(Self::replay(File::open(path)?)?.0)
    }

    /// Replays log lines; the length to truncate to is returned when the final
    /// line is torn.
    fn replay(reader: impl std::io::Read) -> Result<(Self, Option<u64>), CalibrationError> {
        let mut store = Self::default();
        let mut good_len = 0u64;
        let mut lines = BufReader::new(reader).lines().enumerate().peekable();
        while let Some((i, line)) = lines.next() {
            let line = line?;
            let is_last = lines.peek().is_none();
            if line.trim().is_empty() {
                good_len += line.len() as u64 + 1;
                continue;
            }
            match serde_json::from_str::<Entry>(&line) {
                Ok(entry) => {
                    store.apply(entry);
                    good_len += line.len() as u64 + 1;
                }
                Err(_) if is_last => return Ok((store, Some(good_len))),
                Err(e) => {
                    return Err(CalibrationError::Corrupt {
                        line: i + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Ok((store, None))
    }

    fn apply(&mut self, entry: Entry) {
        match entry {
            Entry::Enqueue { mut pair } => {
                pair.status = ReviewStatus::Pending;
                pair.review_note = None;
                self.domain_of.insert(pair.id.clone(), pair.domain.clone());
                self.pairs.insert((pair.domain.clone(), pair.id.clone()), pair);
            }
            Entry::Review { verdict } => {
                if let Some(domain) = self.domain_of.get(&verdict.pair_id) {
                    let pair = self
                        .pairs
                        .get_mut(&(domain.clone(), verdict.pair_id.clone()))
                        .expect("domain index in sync");
                    pair.status = verdict.verdict.status();
                    pair.review_note = verdict.note.clone();
                    self.archive.entry(verdict.pair_id.clone()).or_default().push(verdict);
                }
            }
            Entry::Snapshot { pair, verdicts } => {
                self.domain_of.insert(pair.id.clone(), pair.domain.clone());
                if !verdicts.is_empty() {
                    self.archive.insert(pair.id.clone(), verdicts);
                }
                self.pairs.insert((pair.domain.clone(), pair.id.clone()), pair);
            }
        }
    }

    fn append(&mut self, entries: &[Entry]) -> Result<(), CalibrationError> {
        if let Some((_, file)) = self.file.as_mut() {
            let mut buf = Vec::new();
            for entry in entries {
                serde_json::to_writer(&mut buf, entry)?;
                buf.push(b'\n');
            }
            file.write_all(&buf)?;
            file.sync_data()?;
            self.appended += entries.len();
        }
        Ok(())
    }

    fn get(&self, id: &str) -> Option<&QAPair> {
        let domain = self.domain_of.get(id)?;
        self.pairs.get(&(domain.clone(), id.to_owned()))
    }

    pub fn pair(&self, id: &str) -> Option<&QAPair> {
        self.get(id)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Stores pairs as pending. Re-enqueueing an identical pair is a no-op;
    /// a different pair under a known id fails the whole batch.
    pub fn enqueue(&mut self, pairs: &[QAPair]) -> Result<EnqueueSummary, CalibrationError> {
        let mut fresh: BTreeMap<&str, &QAPair> = BTreeMap::new();
        let mut summary = EnqueueSummary::default();
        for pair in pairs {
            let known = self.get(&pair.id).or_else(|| fresh.get(pair.id.as_str()).copied());
            match known {
                Some(existing) if existing.same_content(pair) => summary.unchanged += 1,
                Some(_) => return Err(CalibrationError::DuplicateId(pair.id.clone())),
                None => {
                    fresh.insert(&pair.id, pair);
                }
            }
        }
        let entries: Vec<Entry> = pairs
            .iter()
            .filter(|p| fresh.get(p.id.as_str()).is_some_and(|f| std::ptr::eq(*f, *p)))
            .map(|p| Entry::Enqueue { pair: p.clone() })
            .collect();
        summary.inserted = entries.len();
        self.append(&entries)?;
        for entry in entries {
            self.apply(entry);
        }
        self.maybe_compact()?;
        Ok(summary)
    }

    /// Records a verdict; the log line is durable before this returns. A
    /// resubmission identical to the latest verdict (ignoring the timestamp)
    /// is acknowledged without being recorded twice.
    pub fn review(&mut self, verdict: ReviewVerdict) -> Result<QAPair, CalibrationError> {
        let Some(current) = self.get(&verdict.pair_id) else {
            return Err(CalibrationError::NotFound(verdict.pair_id));
        };
        if self.verdicts(&verdict.pair_id).last().is_some_and(|last| {
            (last.verdict, &last.note, &last.reviewer) == (verdict.verdict, &verdict.note, &verdict.reviewer)
        }) {
            return Ok(current.clone());
        }
        let id = verdict.pair_id.clone();
        let entry = Entry::Review { verdict };
        self.append(std::slice::from_ref(&entry))?;
        self.apply(entry);
        self.maybe_compact()?;
        Ok(self.get(&id).expect("checked above").clone())
    }

    /// Every verdict a pair received, oldest first.
    pub fn verdicts(&self, id: &str) -> &[ReviewVerdict] {
        self.archive.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// 1-based page of pairs ordered by (domain, id).
    pub fn list(&self, status: Option<ReviewStatus>, page: usize, page_size: usize) -> Result<Page, CalibrationError> {
        if !(1..=MAX_PAGE_SIZE).contains(&page_size) {
            return Err(CalibrationError::PageSize(page_size));
        }
        if page == 0 {
            return Err(CalibrationError::Page);
        }
        let matching = self.pairs.values().filter(|p| status.is_none_or(|s| p.status == s));
        let mut total = 0;
        let mut items = Vec::new();
        let skip = (page - 1).saturating_mul(page_size);
        for (i, pair) in matching.enumerate() {
            total += 1;
            if i >= skip && items.len() < page_size {
                items.push(pair.clone());
            }
        }
        Ok(Page {
            items,
            total,
            page,
            page_size,
        })
    }

    /// All pairs with `status`, ordered by (domain, id).
    pub fn export(&self, status: ReviewStatus) -> Vec<QAPair> {
        self.pairs.values().filter(|p| p.status == status).cloned().collect()
    }

    pub fn stats(&self) -> Stats {
        let mut stats = Stats::default();
        let mut all = StatusCounts::default();
        for pair in self.pairs.values() {
            all.bump(pair.status);
            stats.per_domain.entry(pair.domain.clone()).or_default().bump(pair.status);
        }
        stats.pending = all.pending;
        stats.accepted = all.accepted;
        stats.rejected = all.rejected;
        stats
    }

    fn maybe_compact(&mut self) -> Result<(), CalibrationError> {
        if self.appended >= COMPACT_AFTER {
            self.compact()?;
        }
        Ok(())
    }

    /// Rewrites the log as one snapshot line per pair.
    pub fn compact(&mut self) -> Result<(), CalibrationError> {
        let Some((path, _)) = self.file.as_ref() else {
            return Ok(());
        };
        let path = path.clone();
        let tmp = path.with_extension("compact.tmp");
        {
            let mut out = std::io::BufWriter::new(File::create(&tmp)?);
            for pair in self.pairs.values() {
                let entry = Entry::Snapshot {
                    pair: pair.clone(),
                    verdicts: self.verdicts(&pair.id).to_vec(),
                };
                serde_json::to_writer(&mut out, &entry)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
            out.get_ref().sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        let file = OpenOptions::new().append(true).read(true).open(&path)?;
        self.file = Some((path, file));
        self.appended = 0;
        Ok(())
    }
}
