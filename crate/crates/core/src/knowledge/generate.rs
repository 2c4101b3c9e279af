use std::cmp::Ordering;

use chrono::{DateTime, Utc};
use futures::stream::{self, StreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::client::{complete_with_retry, RetryPolicy, TextGenClient};
use super::questions::{QuestionBank, VARIATIONS_PER_DIMENSION};
use super::{assemble_prompt, DomainRegistry, KnowledgeError};
use crate::model::{KnowledgeDimension, LogEvent, Provenance, QAPair, ReviewStatus, Source, TemplateId};

/// One question to ask about one event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationJob {
    pub event: LogEvent,
    pub dimension: KnowledgeDimension,
    pub variation_index: usize,
    pub question: String,
    pub prompt: String,
    pub attempts: u32,
}

/// A job that still failed after all retries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub template_id: TemplateId,
    pub source: Source,
    pub dimension: KnowledgeDimension,
    pub cause: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenerationOutcome {
    /// Sorted by (input event order, dimension).
    pub pairs: Vec<QAPair>,
    pub failures: Vec<GenerationFailure>,
}

fn variation_seed(seed: u64, salt: u64, event: &LogEvent, dimension: KnowledgeDimension) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(salt.to_le_bytes());
    for part in [
        event.domain(),
        event.template_id.as_str(),
        &event.group.source.line.to_string(),
        dimension.slug(),
    ] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

/// Asks questions about events through a [`TextGenClient`].
#[derive(Debug, Clone)]
pub struct Generator {
    pub bank: QuestionBank,
    pub domains: DomainRegistry,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    /// Stamped into every pair's provenance.
    pub generated_at: DateTime<Utc>,
}

impl Generator {
    pub fn new(generated_at: DateTime<Utc>) -> Self {
        Self {
            bank: QuestionBank::builtin(),
            domains: DomainRegistry::loghub(),
            retry: RetryPolicy::default(),
            max_in_flight: 8,
            generated_at,
        }
    }

    /// Picks a variation uniformly from a generator keyed by
    /// `(seed, event, dimension)` and assembles the prompt.
    pub fn build_prompt(
        &self,
        event: &LogEvent,
        dimension: KnowledgeDimension,
        seed: u64,
    ) -> Result<GenerationJob, KnowledgeError> {
        self.build_prompt_salted(event, dimension, seed, 0)
    }

    /// As [`build_prompt`](Self::build_prompt); a non-zero `salt` gives an
    /// independent draw, used when regenerating.
    pub fn build_prompt_salted(
        &self,
        event: &LogEvent,
        dimension: KnowledgeDimension,
        seed: u64,
        salt: u64,
    ) -> Result<GenerationJob, KnowledgeError> {
        let display = self
            .domains
            .display(event.domain())
            .ok_or_else(|| KnowledgeError::UnknownDomain(event.domain().to_owned()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(variation_seed(seed, salt, event, dimension));
        let variation_index = rng.gen_range(0..VARIATIONS_PER_DIMENSION);
        let question = self.bank.question(dimension, variation_index, display);
        let prompt = assemble_prompt(&question, &event.rendered);
        Ok(GenerationJob {
            event: event.clone(),
            dimension,
            variation_index,
            question,
            prompt,
            attempts: 0,
        })
    }

    async fn run_job<C: TextGenClient + ?Sized>(
        &self,
        mut job: GenerationJob,
        client: &C,
    ) -> Result<QAPair, GenerationFailure> {
        let outcome = complete_with_retry(client, &job.prompt, &self.retry).await;
        job.attempts = client.recorded_attempts(&job.prompt).unwrap_or(outcome.attempts);
        let event = &job.event;
        match outcome.result {
            Ok(answer) => Ok(QAPair {
                id: QAPair::make_id(&event.template_id, &event.group.source, job.dimension),
                domain: event.domain().to_owned(),
                dimension: job.dimension,
                question: job.question,
                log: event.rendered.clone(),
                answer,
                status: ReviewStatus::Pending,
                provenance: Provenance {
                    model: client.model_name().to_owned(),
                    generated_at: self.generated_at,
                    variation: job.variation_index,
                    attempts: job.attempts,
                },
                review_note: None,
                template_id: event.template_id.clone(),
                source: event.group.source.clone(),
                variables: event.group.values.clone(),
            }),
            Err(err) => Err(GenerationFailure {
                template_id: event.template_id.clone(),
                source: event.group.source.clone(),
                dimension: job.dimension,
                cause: err.to_string(),
                attempts: job.attempts,
            }),
        }
    }

    /// Runs jobs with at most `max_in_flight` outstanding, then restores the
    /// input order.
    pub async fn run_jobs<C: TextGenClient + ?Sized>(&self, jobs: Vec<GenerationJob>, client: &C) -> GenerationOutcome {
        let mut results: Vec<(usize, Result<QAPair, GenerationFailure>)> = stream::iter(jobs.into_iter().enumerate())
            .map(|(i, job)| async move { (i, self.run_job(job, client).await) })
            .buffer_unordered(self.max_in_flight.max(1))
            .collect()
            .await;
        results.sort_by_key(|a| a.0);
        let mut outcome = GenerationOutcome::default();
        for (_, r) in results {
            match r {
                Ok(pair) => outcome.pairs.push(pair),
                Err(f) => outcome.failures.push(f),
            }
        }
        outcome
    }

    /// Five pairs for one event, one per dimension. Failed dimensions are
    /// listed in `failures`; the others are still returned.
    pub async fn generate<C: TextGenClient + ?Sized>(
        &self,
        event: &LogEvent,
        client: &C,
        seed: u64,
    ) -> Result<GenerationOutcome, KnowledgeError> {
        self.generate_all(std::slice::from_ref(event), client, seed).await
    }

    pub async fn generate_all<C: TextGenClient + ?Sized>(
        &self,
        events: &[LogEvent],
        client: &C,
        seed: u64,
    ) -> Result<GenerationOutcome, KnowledgeError> {
        let mut jobs = Vec::with_capacity(events.len() * KnowledgeDimension::ALL.len());
        for event in events {
            for dimension in KnowledgeDimension::ALL {
                jobs.push(self.build_prompt(event, dimension, seed)?);
            }
        }
        Ok(self.run_jobs(jobs, client).await)
    }

    /// Re-asks the (event, dimension) behind each pair with a fresh
    /// variation draw (`round` >= 1 selects the draw).
    pub async fn regenerate<C: TextGenClient + ?Sized>(
        &self,
        pairs: &[QAPair],
        client: &C,
        seed: u64,
        round: u64,
    ) -> Result<GenerationOutcome, KnowledgeError> {
        let mut jobs = Vec::with_capacity(pairs.len());
        for pair in pairs {
            let event = event_of(pair);
            jobs.push(self.build_prompt_salted(&event, pair.dimension, seed, round)?);
        }
        Ok(self.run_jobs(jobs, client).await)
    }
}

/// The event a pair was generated from.
pub fn event_of(pair: &QAPair) -> LogEvent {
    LogEvent {
        template_id: pair.template_id.clone(),
        group: crate::model::VariableGroup {
            template_id: pair.template_id.clone(),
            values: pair.variables.clone(),
            source: pair.source.clone(),
        },
        rendered: pair.log.clone(),
    }
}

/// Orders pairs by event key, then dimension.
pub fn pair_order(a: &QAPair, b: &QAPair) -> Ordering {
    (a.event_key(), a.dimension).cmp(&(b.event_key(), b.dimension))
}
