//! Language-model backends: an OpenAI-compatible chat client, a
//! record/replay cassette wrapper and a scripted backend for tests.

mod cassette;
mod openai;
mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cassette::{CassetteBackend, CassetteEntry, CassetteMode};
pub use openai::{ChatCompletionsBackend, ChatConfig};
pub use scripted::ScriptedBackend;

/// One completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub system: String,
    pub prompt: String,
    pub temperature: f64,
}

impl LlmRequest {
    pub fn new(system: impl Into<String>, prompt: impl Into<String>, temperature: f64) -> Self {
        Self { system: system.into(), prompt: prompt.into(), temperature }
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("LLM request to {endpoint} failed after {attempts} attempt(s): {message}")]
    Transport { endpoint: String, attempts: u32, message: String },
    #[error("LLM endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed LLM response: {0}")]
    Malformed(String),
    #[error("no cassette entry for request {fingerprint} (model {model})")]
    CassetteMiss { fingerprint: String, model: String },
    #[error("cassette {path}: {message}")]
    Cassette { path: String, message: String },
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("scripted backend: {0}")]
    Script(String),
}

/// A text-completion model. Implementations must be safe to share across
/// threads.
pub trait LlmBackend: Send + Sync {
    fn model_identifier(&self) -> &str;
    fn invoke(&self, request: &LlmRequest) -> Result<String, LlmError>;
}

impl<T: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<T> {
    fn model_identifier(&self) -> &str {
        (**self).model_identifier()
    }

    fn invoke(&self, request: &LlmRequest) -> Result<String, LlmError> {
        (**self).invoke(request)
    }
}

/// Strips a surrounding Markdown code fence, if any.
pub fn strip_code_fence(s: &str) -> &str {
    let t = s.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let rest = rest.split_once('\n').map(|(_, body)| body).unwrap_or("");
        return rest.trim_end().strip_suffix("```").unwrap_or(rest).trim();
    }
    t
}
