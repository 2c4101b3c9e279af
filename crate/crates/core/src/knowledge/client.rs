//! Text-generation clients and the retry loop around them.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ClientError {
    #[error("request timed out")]
    Timeout,
    #[error("http status {0}")]
    HttpStatus(u16),
    #[error("rate limited")]
    RateLimited,
    /// Connection-level failure (refused, reset, DNS).
    #[error("transport: {0}")]
    Transport(String),
    /// Not worth retrying: bad configuration, undecodable response, missing
    /// replay entry.
    #[error("{0}")]
    Fatal(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        !matches!(self, ClientError::Fatal(_))
    }
}

/// Anything that turns a prompt into an answer.
#[async_trait]
pub trait TextGenClient: Send + Sync {
    /// Recorded in every pair's provenance.
    fn model_name(&self) -> &str;

    async fn complete(&self, prompt: &str) -> Result<String, ClientError>;

    /// Attempt count of the run an answer was recorded from, if replaying.
    fn recorded_attempts(&self, _prompt: &str) -> Option<u32> {
        None
    }
}

#[async_trait]
impl<T: TextGenClient + ?Sized> TextGenClient for std::sync::Arc<T> {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }

    async fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        (**self).complete(prompt).await
    }

    fn recorded_attempts(&self, prompt: &str) -> Option<u32> {
        (**self).recorded_attempts(prompt)
    }
}

/// Hex SHA-256 of the prompt; the key of replay files.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

fn require_prompt(prompt: &str) -> Result<(), ClientError> {
    if prompt.trim().is_empty() {
        return Err(ClientError::Fatal("empty prompt".into()));
    }
    Ok(())
}

/// Deterministic stand-in: answers `canned:<prompt>`.
#[derive(Debug, Clone)]
pub struct MockClient {
    model: String,
}

impl MockClient {
    pub fn new() -> Self {
        Self::named("mock")
    }

    /// Same answers under another model name.
    pub fn named(model: impl Into<String>) -> Self {
        Self { model: model.into() }
    }
}

impl Default for MockClient {
    fn default() -> Self {
        Self::new()
    }
}

#[async_trait]
impl TextGenClient for MockClient {
    fn model_name(&self) -> &str {
        &self.model
    }

    async fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        require_prompt(prompt)?;
        Ok(format!("canned:{prompt}"))
    }
}

/// Mock that fails the first `failures` calls for every distinct prompt
/// with `error`, then answers like [`MockClient`].
#[derive(Debug)]
pub struct FlakyClient {
    failures: usize,
    error: ClientError,
    seen: Mutex<HashMap<String, usize>>,
    calls: AtomicUsize,
}

impl FlakyClient {
    pub fn new(failures: usize, error: ClientError) -> Self {
        Self {
            failures,
            error,
            seen: Mutex::new(HashMap::new()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl TextGenClient for FlakyClient {
    fn model_name(&self) -> &str {
        "mock"
    }

    async fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let n = {
            let mut seen = self.seen.lock().expect("poisoned");
            let n = seen.entry(prompt.to_owned()).or_default();
            *n += 1;
            *n
        };
        if n <= self.failures {
            return Err(self.error.clone());
        }
        require_prompt(prompt)?;
        Ok(format!("canned:{prompt}"))
    }
}

/// One line of a replay file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub prompt_hash: String,
    pub answer: String,
    /// Calls the recorded run needed for this prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempts: Option<u32>,
}

/// Answers from a recorded `{prompt_hash, answer}` JSON-lines file; never
/// touches the network.
#[derive(Debug)]
pub struct ReplayClient {
    model: String,
    answers: HashMap<String, (String, Option<u32>)>,
    lookups: AtomicUsize,
}

impl ReplayClient {
    pub fn new(model: impl Into<String>, entries: impl IntoIterator<Item = ReplayEntry>) -> Self {
        Self {
            model: model.into(),
            answers: entries.into_iter().map(|e| (e.prompt_hash, (e.answer, e.attempts))).collect(),
            lookups: AtomicUsize::new(0),
        }
    }

    pub fn load(model: impl Into<String>, path: impl AsRef<Path>) -> std::io::Result<Self> {
        let mut entries = Vec::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            entries.push(entry);
        }
        Ok(Self::new(model, entries))
    }

    pub fn lookups(&self) -> usize {
        self.lookups.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

#[async_trait]
impl TextGenClient for ReplayClient {
    fn model_name(&self) -> &str {
        &self.model
    }

    async fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        self.lookups.fetch_add(1, Ordering::SeqCst);
        let hash = prompt_hash(prompt);
        self.answers
            .get(&hash)
            .map(|(answer, _)| answer.clone())
            .ok_or_else(|| ClientError::Fatal(format!("no recorded answer for prompt {hash}")))
    }

    fn recorded_attempts(&self, prompt: &str) -> Option<u32> {
        self.answers.get(&prompt_hash(prompt)).and_then(|(_, attempts)| *attempts)
    }
}

/// Wraps a client and remembers every successful answer so the run can be
/// replayed later.
pub struct RecordingClient<C> {
    inner: C,
    // prompt hash -> (calls so far, answer once one succeeded)
    recorded: Mutex<BTreeMap<String, (u32, Option<String>)>>,
}

impl<C: TextGenClient> RecordingClient<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            recorded: Mutex::new(BTreeMap::new()),
        }
    }

    /// Recorded entries ordered by prompt hash.
    pub fn entries(&self) -> Vec<ReplayEntry> {
        self.recorded
            .lock()
            .expect("poisoned")
            .iter()
            .filter_map(|(h, (calls, answer))| {
                Some(ReplayEntry {
                    prompt_hash: h.clone(),
                    answer: answer.clone()?,
                    attempts: Some(*calls),
                })
            })
            .collect()
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(File::create(path)?);
        for entry in self.entries() {
            serde_json::to_writer(&mut out, &entry)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

#[async_trait]
impl<C: TextGenClient> TextGenClient for RecordingClient<C> {
    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    async fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let hash = prompt_hash(prompt);
        self.recorded.lock().expect("poisoned").entry(hash.clone()).or_default().0 += 1;
        let answer = self.inner.complete(prompt).await?;
        self.recorded.lock().expect("poisoned").entry(hash).or_default().1 = Some(answer.clone());
        Ok(answer)
    }
}

/// Exponential backoff with jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Policy with no waiting between attempts, for tests and mocks.
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            jitter: false,
        }
    }

    /// Wait after failed attempt number `attempt` (1-based): `base * 2^(attempt-1)`
    /// capped at `max_delay`; with jitter, uniform in `[d/2, d]`.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.saturating_sub(1));
        let delay = self.base_delay.saturating_mul(factor).min(self.max_delay);
        if self.jitter && !delay.is_zero() {
            let half = delay / 2;
            half + rand::thread_rng().gen_range(Duration::ZERO..=half)
        } else {
            delay
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Outcome of a retried call: the answer or the last error, plus how many
/// attempts were made.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attempted<T> {
    pub result: Result<T, ClientError>,
    pub attempts: u32,
}

pub async fn complete_with_retry<C: TextGenClient + ?Sized>(
    client: &C,
    prompt: &str,
    policy: &RetryPolicy,
) -> Attempted<String> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match client.complete(prompt).await {
            Ok(answer) => {
                return Attempted {
                    result: Ok(answer),
                    attempts,
                }
            }
            Err(err) if err.is_retryable() && attempts < policy.max_attempts.max(1) => {
                tracing::debug!(attempt = attempts, error = %err, "retrying generation request");
                let delay = policy.delay_after(attempts);
                if !delay.is_zero() {
                    tokio::time::sleep(delay).await;
                }
            }
            Err(err) => {
                return Attempted {
                    result: Err(err),
                    attempts,
                }
            }
        }
    }
}
