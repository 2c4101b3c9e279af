//! Chat-completions client (`POST {model, messages}` → `choices[0].message.content`).

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use logknow_core::knowledge::{ClientError, TextGenClient};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Sent as `Authorization: Bearer <token>` when set.
    #[serde(skip_serializing)]
    pub token: Option<String>,
    #[serde(with = "millis")]
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl ChatConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            token: None,
            timeout: Duration::from_secs(60),
            max_in_flight: 8,
        }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
}

#[derive(Deserialize)]
struct Response {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

pub struct ChatClient {
    config: ChatConfig,
    http: reqwest::Client,
    permits: Arc<Semaphore>,
}

impl ChatClient {
    pub fn new(config: ChatConfig) -> Result<Self, ClientError> {
        if config.endpoint.trim().is_empty() {
            return Err(ClientError::Fatal("chat endpoint is not configured".into()));
        }
        let http = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ClientError::Fatal(e.to_string()))?;
        Ok(Self {
            permits: Arc::new(Semaphore::new(config.max_in_flight.max(1))),
            config,
            http,
        })
    }

    pub fn config(&self) -> &ChatConfig {
        &self.config
    }
}

fn classify(err: reqwest::Error) -> ClientError {
    if err.is_timeout() {
        ClientError::Timeout
    } else if err.is_decode() {
        ClientError::Fatal(format!("undecodable response: {err}"))
    } else if err.is_builder() {
        ClientError::Fatal(err.to_string())
    } else {
        ClientError::Transport(err.to_string())
    }
}

#[async_trait]
impl TextGenClient for ChatClient {
    fn model_name(&self) -> &str {
        &self.config.model
    }

    async fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let _permit = self.permits.acquire().await.expect("semaphore is never closed");
        let body = Request {
            model: &self.config.model,
            messages: [Message {
                role: "user",
                content: prompt,
            }],
        };
        let mut request = self.http.post(&self.config.endpoint).json(&body);
        if let Some(token) = &self.config.token {
            request = request.bearer_auth(token);
        }
        let response = request.send().await.map_err(classify)?;
        match response.status() {
            StatusCode::TOO_MANY_REQUESTS => return Err(ClientError::RateLimited),
            s if !s.is_success() => return Err(ClientError::HttpStatus(s.as_u16())),
            _ => {}
        }
        let parsed: Response = response.json().await.map_err(classify)?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ClientError::Fatal("response has no choices[0].message.content".into()))
    }
}
