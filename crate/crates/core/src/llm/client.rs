use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::cassette::{self, CassetteEntry, CassetteMode};
use super::{ChatBackend, ChatMessage, LlmError, LlmSettings, Provider, UsageLedger, UsageTotals};

const MAX_BACKOFF: Duration = Duration::from_secs(30);

/// Counting semaphore bounding in-flight requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().expect("gate lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate lock");
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate lock") += 1;
        self.0.cv.notify_one();
    }
}

/// HTTP chat-completion client. Shareable across threads.
pub struct LlmClient {
    settings: LlmSettings,
    mode: CassetteMode,
    agent: ureq::Agent,
    usage: Arc<UsageLedger>,
    gate: Gate,
}

enum Attempt {
    Done { text: String, input_tokens: u64, output_tokens: u64 },
    Retry { error: LlmError, after: Option<Duration> },
    Fatal(LlmError),
}

impl LlmClient {
    pub fn new(settings: LlmSettings, mode: CassetteMode) -> Result<Self, LlmError> {
        settings.validate().map_err(LlmError::InvalidSettings)?;
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(settings.request_timeout_secs.max(1))))
            .http_status_as_error(false)
            .build();
        Ok(Self {
            gate: Gate::new(settings.max_in_flight),
            agent: ureq::Agent::new_with_config(config),
            usage: Arc::new(UsageLedger::default()),
            settings,
            mode,
        })
    }

    pub fn settings(&self) -> &LlmSettings {
        &self.settings
    }

    pub fn usage(&self) -> UsageTotals {
        self.usage.totals(&self.settings)
    }

    fn api_key(&self) -> Result<String, LlmError> {
        match std::env::var(&self.settings.api_key_env_var) {
            Ok(k) if !k.trim().is_empty() => Ok(k),
            _ => Err(LlmError::AuthError(format!(
                "environment variable {} is not set",
                self.settings.api_key_env_var
            ))),
        }
    }

    fn attempt(&self, key: &str, body: &Value) -> Attempt {
        let mut req = self.agent.post(&self.settings.endpoint_url).header("content-type", "application/json");
        req = match self.settings.provider {
            Provider::Anthropic => req.header("x-api-key", key).header("anthropic-version", "2023-06-01"),
            Provider::OpenAi => req.header("authorization", &format!("Bearer {key}")),
        };
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => {
                return Attempt::Retry { error: LlmError::Timeout { attempts: 1 }, after: None }
            }
            Err(e) => {
                return Attempt::Retry { error: LlmError::TransportError(redact(&e.to_string(), key)), after: None }
            }
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => {
                return Attempt::Retry { error: LlmError::TransportError(redact(&e.to_string(), key)), after: None }
            }
        };
        match status {
            200..=299 => match parse_response(self.settings.provider, &text) {
                Ok((text, input_tokens, output_tokens)) => Attempt::Done { text, input_tokens, output_tokens },
                Err(e) => Attempt::Fatal(LlmError::TransportError(redact(&e, key))),
            },
            401 | 403 => Attempt::Fatal(LlmError::AuthError(format!("provider returned HTTP {status}"))),
            429 => Attempt::Retry { error: LlmError::RateLimited { attempts: 1 }, after: retry_after },
            408 | 500..=599 => Attempt::Retry {
                error: LlmError::TransportError(format!("provider returned HTTP {status}")),
                after: retry_after,
            },
            _ => Attempt::Fatal(LlmError::TransportError(format!(
                "provider returned HTTP {status}: {}",
                redact(&truncate(&text, 200), key)
            ))),
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = Duration::from_millis(self.settings.retry_base_delay_ms);
        base.saturating_mul(1u32 << attempt.min(16)).min(MAX_BACKOFF)
    }

    fn live(&self, system: &str, messages: &[ChatMessage]) -> Result<(String, u64, u64), LlmError> {
        let key = self.api_key()?;
        let body = build_request_body(&self.settings, system, messages);
        let _slot = self.gate.acquire();
        let attempts = self.settings.max_retries + 1;
        let mut last = LlmError::TransportError("no attempt made".into());
        for attempt in 0..attempts {
            match self.attempt(&key, &body) {
                Attempt::Done { text, input_tokens, output_tokens } => return Ok((text, input_tokens, output_tokens)),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry { error, after } => {
                    tracing::warn!(attempt, %error, "retryable LLM failure");
                    last = error;
                    if attempt + 1 < attempts {
                        let wait = after.map(|d| d.min(MAX_BACKOFF)).unwrap_or_else(|| self.backoff(attempt));
                        thread::sleep(wait);
                    }
                }
            }
        }
        Err(match last {
            LlmError::RateLimited { .. } => LlmError::RateLimited { attempts },
            LlmError::Timeout { .. } => LlmError::Timeout { attempts },
            other => other,
        })
    }
}

impl ChatBackend for LlmClient {
    fn complete(&self, system: &str, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let key = cassette::cassette_key(&self.settings, system, messages);
        match &self.mode {
            CassetteMode::Replay(dir) => {
                let entry = cassette::load(dir, &key)?;
                self.usage.record(entry.input_tokens, entry.output_tokens);
                Ok(entry.response)
            }
            CassetteMode::Live => {
                let (text, i, o) = self.live(system, messages)?;
                self.usage.record(i, o);
                Ok(text)
            }
            CassetteMode::Record(dir) => {
                let (text, i, o) = self.live(system, messages)?;
                self.usage.record(i, o);
                cassette::store(
                    dir,
                    &CassetteEntry {
                        key,
                        model: self.settings.model_name.clone(),
                        system: system.to_string(),
                        messages: messages.to_vec(),
                        response: text.clone(),
                        input_tokens: i,
                        output_tokens: o,
                    },
                )?;
                Ok(text)
            }
        }
    }
}

/// Provider-specific request body.
pub fn build_request_body(settings: &LlmSettings, system: &str, messages: &[ChatMessage]) -> Value {
    match settings.provider {
        Provider::Anthropic => json!({
            "model": settings.model_name,
            "system": system,
            "messages": messages,
            "max_tokens": settings.max_tokens,
            "temperature": settings.temperature,
            "top_p": settings.top_p,
        }),
        Provider::OpenAi => {
            let mut all = vec![json!({"role": "system", "content": system})];
            all.extend(messages.iter().map(|m| json!(m)));
            json!({
                "model": settings.model_name,
                "messages": all,
                "max_tokens": settings.max_tokens,
                "temperature": settings.temperature,
                "top_p": settings.top_p,
            })
        }
    }
}

fn parse_response(provider: Provider, body: &str) -> Result<(String, u64, u64), String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    match provider {
        Provider::Anthropic => {
            let text = v["content"]
                .as_array()
                .ok_or("response has no content array")?
                .iter()
                .filter(|block| block["type"] == "text")
                .filter_map(|block| block["text"].as_str())
                .collect::<Vec<_>>()
                .join("");
            let usage = &v["usage"];
            Ok((text, usage["input_tokens"].as_u64().unwrap_or(0), usage["output_tokens"].as_u64().unwrap_or(0)))
        }
        Provider::OpenAi => {
            let text = v["choices"][0]["message"]["content"]
                .as_str()
                .ok_or("response has no choices[0].message.content")?
                .to_string();
            let usage = &v["usage"];
            Ok((text, usage["prompt_tokens"].as_u64().unwrap_or(0), usage["completion_tokens"].as_u64().unwrap_or(0)))
        }
    }
}

fn redact(message: &str, secret: &str) -> String {
    if secret.is_empty() {
        message.to_string()
    } else {
        message.replace(secret, "[redacted]")
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}…", &s[..i]),
        None => s.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anthropic_body_carries_sampling_settings() {
        let s = LlmSettings::default();
        let body = build_request_body(&s, "sys", &[ChatMessage::user("hi")]);
        assert_eq!(body["model"], "claude-3-5-sonnet-20240620");
        assert_eq!(body["temperature"], 0.5);
        assert_eq!(body["top_p"], 0.9);
        assert_eq!(body["max_tokens"], 8192);
        assert_eq!(body["system"], "sys");
        assert_eq!(body["messages"][0]["role"], "user");
    }

    #[test]
    fn openai_body_prepends_system() {
        let s = LlmSettings { provider: Provider::OpenAi, ..Default::default() };
        let body = build_request_body(&s, "sys", &[ChatMessage::user("hi")]);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "hi");
    }

    #[test]
    fn parses_both_provider_shapes() {
        let a = r#"{"content":[{"type":"text","text":"hel"},{"type":"text","text":"lo"}],"usage":{"input_tokens":3,"output_tokens":2}}"#;
        assert_eq!(parse_response(Provider::Anthropic, a).unwrap(), ("hello".into(), 3, 2));
        let o = r#"{"choices":[{"message":{"content":"yo"}}],"usage":{"prompt_tokens":4,"completion_tokens":1}}"#;
        assert_eq!(parse_response(Provider::OpenAi, o).unwrap(), ("yo".into(), 4, 1));
        assert!(parse_response(Provider::OpenAi, "{}").is_err());
    }

    #[test]
    fn missing_key_is_auth_error_before_network() {
        let s = LlmSettings {
            api_key_env_var: "SOCIEX_TEST_KEY_THAT_IS_NOT_SET".into(),
            endpoint_url: "http://127.0.0.1:9/never".into(),
            ..Default::default()
        };
        let client = LlmClient::new(s, CassetteMode::Live).unwrap();
        let err = client.complete("sys", &[ChatMessage::user("hi")]).unwrap_err();
        assert!(matches!(err, LlmError::AuthError(_)));
        assert_eq!(client.usage().requests, 0);
    }

    #[test]
    fn replay_miss_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let client = LlmClient::new(LlmSettings::default(), CassetteMode::Replay(dir.path().into())).unwrap();
        assert!(matches!(client.complete("s", &[]), Err(LlmError::CassetteMiss(_))));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let client = LlmClient::new(LlmSettings::default(), CassetteMode::Live).unwrap();
        assert_eq!(client.backoff(0), Duration::from_millis(500));
        assert_eq!(client.backoff(2), Duration::from_millis(2000));
        assert_eq!(client.backoff(20), MAX_BACKOFF);
    }
}
