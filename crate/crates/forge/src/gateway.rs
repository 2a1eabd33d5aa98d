//! Chat-completion gateway: one request/response interface with an HTTP
//! implementation for OpenAI-compatible endpoints and a scripted transport
//! for deterministic tests.
//!
//! Retries wrap the transport, so a scripted mock sees every attempt exactly
//! like a live endpoint would. Transient failures (connect errors, timeouts,
//! HTTP 429/5xx) are retried with exponential backoff and jitter up to the
//! policy's attempt budget; 4xx responses are surfaced immediately.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use base64::Engine as _;
use rand::RngExt;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::sync::Semaphore;

#[derive(Debug, Error)]
pub enum GatewayError {
    /// Retry budget exhausted on transient failures.
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    /// Non-retryable request rejection (HTTP 4xx).
    #[error("request rejected{}: {message}", status.map(|s| format!(" ({s})")).unwrap_or_default())]
    Request { status: Option<u16>, message: String },
    #[error("scripted transcript exhausted")]
    ScriptExhausted,
    #[error("credential environment variable {env_var} is not set")]
    MissingCredential { env_var: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    /// The endpoint reported a normal stop with no text.
    #[error("endpoint returned an empty completion")]
    EmptyCompletion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub text: String,
    /// Path or URI of an attached image; only valid on user messages.
    pub image_ref: Option<String>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::System,
            text: text.into(),
            image_ref: None,
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            text: text.into(),
            image_ref: None,
        }
    }

    pub fn user_with_image(text: impl Into<String>, image_ref: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            text: text.into(),
            image_ref: Some(image_ref.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if self
            .messages
            .iter()
            .any(|m| m.image_ref.is_some() && m.role != ChatRole::User)
        {
            return Err(GatewayError::InvalidRequest(
                "images are only permitted on user messages".into(),
            ));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: TokenUsage,
}

impl ChatResponse {
    /// A `Stop` finish with empty text is a protocol violation and surfaces
    /// as [`GatewayError::EmptyCompletion`].
    pub fn new(
        text: String,
        finish_reason: FinishReason,
        usage: TokenUsage,
    ) -> Result<Self, GatewayError> {
        if finish_reason == FinishReason::Stop && text.trim().is_empty() {
            return Err(GatewayError::EmptyCompletion);
        }
        Ok(ChatResponse {
            text,
            finish_reason,
            usage,
        })
    }
}

/// Outcome of one transport attempt.
#[derive(Debug)]
pub enum AttemptError {
    /// Worth retrying: connect failures, timeouts, HTTP 429/5xx.
    Retryable(String),
    /// Surfaced immediately.
    NonRetryable(GatewayError),
}

/// A single request attempt against some completion backend.
#[async_trait]
pub trait Transport: Send + Sync {
    async fn send(&self, request: &ChatRequest) -> Result<ChatResponse, AttemptError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub budget: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            budget: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(20),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// No delays; scripted tests should not sleep.
    pub fn immediate(budget: u32) -> Self {
        RetryPolicy {
            budget,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            jitter: false,
        }
    }
}

/// Delay before retry number `retry_index` (0-based), given a jitter draw in
/// [0, 1). Doubling dominates the jitter term, so successive delays never
/// decrease.
pub fn backoff_delay(policy: &RetryPolicy, retry_index: u32, jitter: f64) -> Duration {
    let exp = 2f64.powi(retry_index.min(24) as i32);
    let scaled = policy.base_delay.as_secs_f64() * exp * (1.0 + jitter);
    Duration::from_secs_f64(scaled).min(policy.max_delay)
}

/// Shared chat-completion interface: the HTTP gateway and the scripted mock
/// both implement it through [`Gateway`].
#[async_trait]
pub trait ChatClient: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

/// Retry/limit wrapper around a transport.
pub struct Gateway {
    transport: Arc<dyn Transport>,
    policy: RetryPolicy,
    limiter: Arc<Semaphore>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("policy", &self.policy)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(transport: Arc<dyn Transport>, policy: RetryPolicy, concurrency: usize) -> Self {
        Gateway {
            transport,
            policy,
            limiter: Arc::new(Semaphore::new(concurrency.max(1))),
        }
    }
}

#[async_trait]
impl ChatClient for Gateway {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let _permit = self
            .limiter
            .acquire()
            .await
            .expect("request limiter never closes");
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            match self.transport.send(request).await {
                Ok(response) => return Ok(response),
                Err(AttemptError::NonRetryable(err)) => return Err(err),
                Err(AttemptError::Retryable(message)) => {
                    if attempts >= self.policy.budget {
                        return Err(GatewayError::Transport { attempts, message });
                    }
                    let jitter = if self.policy.jitter {
                        rand::rng().random_range(0.0..1.0)
                    } else {
                        0.0
                    };
                    let delay = backoff_delay(&self.policy, attempts - 1, jitter);
                    if !delay.is_zero() {
                        tokio::time::sleep(delay).await;
                    }
                }
            }
        }
    }
}

/// One canned reply in a scripted transcript.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptEntry {
    Reply(String),
    /// Simulates a transient transport failure.
    Fail,
}

/// Transport that consumes a transcript in order; exhaustion is an error.
pub struct ScriptedTransport {
    entries: Mutex<VecDeque<ScriptEntry>>,
}

impl ScriptedTransport {
    pub fn new(transcript: Vec<ScriptEntry>) -> Self {
        ScriptedTransport {
            entries: Mutex::new(transcript.into()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.entries.lock().expect("script lock").len()
    }
}

#[async_trait]
impl Transport for ScriptedTransport {
    async fn send(&self, _request: &ChatRequest) -> Result<ChatResponse, AttemptError> {
        let entry = self.entries.lock().expect("script lock").pop_front();
        match entry {
            None => Err(AttemptError::NonRetryable(GatewayError::ScriptExhausted)),
            Some(ScriptEntry::Fail) => {
                Err(AttemptError::Retryable("scripted transport failure".into()))
            }
            Some(ScriptEntry::Reply(text)) => {
                ChatResponse::new(text, FinishReason::Stop, TokenUsage::default())
                    .map_err(AttemptError::NonRetryable)
            }
        }
    }
}

/// Client handle whose completions come from a canned transcript, consumed
/// one entry per attempt.
pub fn mock_script(transcript: Vec<ScriptEntry>) -> Gateway {
    mock_script_with_budget(transcript, RetryPolicy::default().budget)
}

/// As [`mock_script`] with an explicit retry budget.
pub fn mock_script_with_budget(transcript: Vec<ScriptEntry>, budget: u32) -> Gateway {
    Gateway::new(
        Arc::new(ScriptedTransport::new(transcript)),
        RetryPolicy::immediate(budget),
        4,
    )
}

/// How images are embedded into user messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageEncoding {
    /// Pass the image reference through as a URL.
    Url,
    /// Read the file and inline it as a base64 data URI.
    Base64DataUri,
}

/// Configuration for one OpenAI-compatible endpoint. The credential is named
/// by environment variable only; config files never hold secrets.
#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub image_encoding: ImageEncoding,
    pub concurrency: usize,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

impl EndpointConfig {
    /// Builds the HTTP-backed client, reading the bearer token from the
    /// configured environment variable.
    pub fn connect(&self) -> Result<Gateway, GatewayError> {
        let api_key =
            std::env::var(&self.api_key_env).map_err(|_| GatewayError::MissingCredential {
                env_var: self.api_key_env.clone(),
            })?;
        let transport = HttpTransport::new(
            self.base_url.trim_end_matches('/').to_string(),
            api_key,
            self.image_encoding,
            self.timeout,
        )?;
        Ok(Gateway::new(
            Arc::new(transport),
            self.retry.clone(),
            self.concurrency,
        ))
    }
}

/// POSTs `{base_url}/chat/completions` with the standard JSON body and reads
/// `choices[0].message.content` back.
pub struct HttpTransport {
    base_url: String,
    api_key: String,
    image_encoding: ImageEncoding,
    client: reqwest::Client,
}

impl HttpTransport {
    pub fn new(
        base_url: String,
        api_key: String,
        image_encoding: ImageEncoding,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::InvalidRequest(format!("http client: {e}")))?;
        Ok(HttpTransport {
            base_url,
            api_key,
            image_encoding,
            client,
        })
    }

    async fn message_json(&self, message: &ChatMessage) -> Result<serde_json::Value, AttemptError> {
        let role = match message.role {
            ChatRole::System => "system",
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        };
        let content = match &message.image_ref {
            None => json!(message.text),
            Some(image_ref) => {
                let url = match self.image_encoding {
                    ImageEncoding::Url => image_ref.clone(),
                    ImageEncoding::Base64DataUri => {
                        let bytes = tokio::fs::read(image_ref).await.map_err(|e| {
                            AttemptError::NonRetryable(GatewayError::InvalidRequest(format!(
                                "cannot read image {image_ref}: {e}"
                            )))
                        })?;
                        format!(
                            "data:{};base64,{}",
                            image_mime(image_ref),
                            base64::engine::general_purpose::STANDARD.encode(bytes)
                        )
                    }
                };
                json!([
                    {"type": "text", "text": message.text},
                    {"type": "image_url", "image_url": {"url": url}},
                ])
            }
        };
        Ok(json!({"role": role, "content": content}))
    }

    /// Serializes the request body; message order is preserved verbatim.
    pub async fn request_body(
        &self,
        request: &ChatRequest,
    ) -> Result<serde_json::Value, AttemptError> {
        let mut messages = Vec::with_capacity(request.messages.len());
        for message in &request.messages {
            messages.push(self.message_json(message).await?);
        }
        Ok(json!({
            "model": request.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }))
    }
}

fn image_mime(path: &str) -> &'static str {
    let lower = path.to_lowercase();
    if lower.ends_with(".png") {
        "image/png"
    } else if lower.ends_with(".jpg") || lower.ends_with(".jpeg") {
        "image/jpeg"
    } else if lower.ends_with(".webp") {
        "image/webp"
    } else if lower.ends_with(".gif") {
        "image/gif"
    } else {
        "image/png"
    }
}

#[derive(Debug, Deserialize)]
struct CompletionsReply {
    choices: Vec<CompletionsChoice>,
    #[serde(default)]
    usage: Option<CompletionsUsage>,
}

#[derive(Debug, Deserialize)]
struct CompletionsChoice {
    message: CompletionsMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct CompletionsMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct CompletionsUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[async_trait]
impl Transport for HttpTransport {
    async fn send(&self, request: &ChatRequest) -> Result<ChatResponse, AttemptError> {
        let body = self.request_body(request).await?;
        let url = format!("{}/chat/completions", self.base_url);
        let response = self
            .client
            .post(&url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .await
            .map_err(|e| AttemptError::Retryable(format!("send failed: {e}")))?;

        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(AttemptError::Retryable(format!("http status {status}")));
        }
        if status.is_client_error() {
            let message = response.text().await.unwrap_or_default();
            return Err(AttemptError::NonRetryable(GatewayError::Request {
                status: Some(status.as_u16()),
                message,
            }));
        }
        let reply: CompletionsReply = response
            .json()
            .await
            .map_err(|e| AttemptError::Retryable(format!("malformed reply: {e}")))?;
        let choice = reply.choices.into_iter().next().ok_or_else(|| {
            AttemptError::NonRetryable(GatewayError::Request {
                status: None,
                message: "reply contains no choices".into(),
            })
        })?;
        let finish_reason = match choice.finish_reason.as_deref() {
            None | Some("stop") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) => FinishReason::Error,
        };
        let usage = reply
            .usage
            .map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            })
            .unwrap_or_default();
        ChatResponse::new(choice.message.content.unwrap_or_default(), finish_reason, usage)
            .map_err(AttemptError::NonRetryable)
    }
}
