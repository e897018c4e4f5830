use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use tracing::warn;

use super::{LlmBackend, LlmError, LlmRequest};
use crate::revision::http::{RateLimiter, RetryPolicy};

/// Connection settings for an OpenAI-compatible `/chat/completions`
/// endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

pub struct ChatCompletionsBackend {
    config: ChatConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    limiter: Arc<RateLimiter>,
    retry: RetryPolicy,
}

impl ChatCompletionsBackend {
    pub fn new(config: ChatConfig, limiter: Arc<RateLimiter>) -> Result<Self, LlmError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| LlmError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self { config, api_key, client, limiter, retry: RetryPolicy::default() })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

impl LlmBackend for ChatCompletionsBackend {
    fn model_identifier(&self) -> &str {
        &self.config.model
    }

    fn invoke(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let endpoint = self.endpoint();
        let mut messages = Vec::new();
        if !request.system.is_empty() {
            messages.push(json!({"role": "system", "content": request.system}));
        }
        messages.push(json!({"role": "user", "content": request.prompt}));
        let body = json!({
            "model": self.config.model,
            "temperature": request.temperature,
            "messages": messages,
        });

        let mut attempt = 0;
        loop {
            attempt += 1;
            self.limiter.acquire();
            let mut req = self.client.post(&endpoint).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let backoff = self.retry.base_backoff * 2u32.saturating_pow(attempt - 1);
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if (status.as_u16() == 429 || status.is_server_error()) && attempt < self.retry.max_attempts {
                        warn!(endpoint, attempt, status = status.as_u16(), "LLM call failed, retrying");
                        thread::sleep(backoff);
                        continue;
                    }
                    let text = resp.text().map_err(|e| LlmError::Transport {
                        endpoint: endpoint.clone(),
                        attempts: attempt,
                        message: e.to_string(),
                    })?;
                    if !status.is_success() {
                        return Err(LlmError::Status { status: status.as_u16(), body: text });
                    }
                    let parsed: ChatResponse =
                        serde_json::from_str(&text).map_err(|e| LlmError::Malformed(format!("{e}: {text}")))?;
                    return parsed
                        .choices
                        .into_iter()
                        .next()
                        .and_then(|c| c.message.content)
                        .ok_or_else(|| LlmError::Malformed(format!("no message content in {text}")));
                }
                Err(e) if attempt < self.retry.max_attempts => {
                    warn!(endpoint, attempt, error = %e, "LLM call failed, retrying");
                    thread::sleep(backoff);
                }
                Err(e) => {
                    return Err(LlmError::Transport { endpoint, attempts: attempt, message: e.to_string() });
                }
            }
        }
    }
}
