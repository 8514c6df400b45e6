//! Chat-completion transport: settings, provider adapters, retry with
//! exponential backoff, usage accounting and record/replay cassettes.

mod cassette;
mod client;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cassette::{cassette_key, CassetteEntry, CassetteMode};
pub use client::{build_request_body, LlmClient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    /// `POST /v1/messages` with a top-level `system` field.
    #[default]
    Anthropic,
    /// `POST /v1/chat/completions` with the system prompt as the first message.
    OpenAi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    pub endpoint_url: String,
    pub api_key_env_var: String,
    pub provider: Provider,
    pub request_timeout_secs: u64,
    pub max_retries: u32,
    pub retry_base_delay_ms: u64,
    pub max_in_flight: usize,
    /// USD per million input / output tokens, for the cost estimate.
    pub input_price_per_mtok: f64,
    pub output_price_per_mtok: f64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            model_name: "claude-3-5-sonnet-20240620".to_string(),
            temperature: 0.5,
            max_tokens: 8192,
            top_p: 0.9,
            endpoint_url: "https://api.anthropic.com/v1/messages".to_string(),
            api_key_env_var: "ANTHROPIC_API_KEY".to_string(),
            provider: Provider::Anthropic,
            request_timeout_secs: 120,
            max_retries: 4,
            retry_base_delay_ms: 500,
            max_in_flight: 3,
            input_price_per_mtok: 3.0,
            output_price_per_mtok: 15.0,
        }
    }
}

impl LlmSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p {} outside (0, 1]", self.top_p));
        }
        if self.max_tokens < 1 {
            return Err("max_tokens must be ≥ 1".to_string());
        }
        if self.max_in_flight < 1 {
            return Err("max_in_flight must be ≥ 1".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("no cassette recording for request {0}")]
    CassetteMiss(String),
    #[error("cassette I/O failed: {0}")]
    CassetteIo(String),
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
}

/// Anything that turns a system prompt plus conversation into assistant text.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, system: &str, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UsageTotals {
    pub requests: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub estimated_cost_usd: f64,
}

/// Per-run counters; monotone non-decreasing.
#[derive(Debug, Default)]
pub struct UsageLedger {
    requests: AtomicU64,
    input_tokens: AtomicU64,
    output_tokens: AtomicU64,
}

impl UsageLedger {
    pub fn record(&self, input_tokens: u64, output_tokens: u64) {
        self.requests.fetch_add(1, Ordering::Relaxed);
        self.input_tokens.fetch_add(input_tokens, Ordering::Relaxed);
        self.output_tokens.fetch_add(output_tokens, Ordering::Relaxed);
    }

    pub fn totals(&self, settings: &LlmSettings) -> UsageTotals {
        let input = self.input_tokens.load(Ordering::Relaxed);
        let output = self.output_tokens.load(Ordering::Relaxed);
        UsageTotals {
            requests: self.requests.load(Ordering::Relaxed),
            input_tokens: input,
            output_tokens: output,
            estimated_cost_usd: (input as f64 * settings.input_price_per_mtok
                + output as f64 * settings.output_price_per_mtok)
                / 1_000_000.0,
        }
    }
}
