//! Record/replay of LLM interactions.
//!
//! Requests are matched by a SHA-256 fingerprint over model, system prompt,
//! user prompt and temperature, so replay does not depend on call order.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LlmBackend, LlmError, LlmRequest};
use crate::revision::{decode_lines, encode_record, Record};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CassetteMode {
    /// Serve hits from the cassette, forward misses to the inner backend and
    /// append them.
    Record,
    /// Serve only from the cassette; misses are errors.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub model: String,
    pub system: String,
    pub prompt: String,
    pub temperature: f64,
    pub response: String,
}

impl Record for CassetteEntry {
    const KIND: &'static str = "llm_interaction";
}

pub fn fingerprint(model: &str, request: &LlmRequest) -> String {
    let mut h = Sha256::new();
    for part in [model, request.system.as_str(), request.prompt.as_str()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    h.update(request.temperature.to_bits().to_le_bytes());
    hex::encode(h.finalize())
}

pub struct CassetteBackend {
    path: PathBuf,
    mode: CassetteMode,
    model: String,
    inner: Option<Arc<dyn LlmBackend>>,
    entries: Mutex<HashMap<String, String>>,
    inner_calls: AtomicUsize,
}

impl CassetteBackend {
    /// Replays `path` for `model`; the file must exist.
    pub fn replay(path: impl Into<PathBuf>, model: impl Into<String>) -> Result<Self, LlmError> {
        let path = path.into();
        let entries = load(&path, true)?;
        Ok(Self {
            path,
            mode: CassetteMode::Replay,
            model: model.into(),
            inner: None,
            entries: Mutex::new(entries),
            inner_calls: AtomicUsize::new(0),
        })
    }

    /// Records misses from `inner` into `path`, creating it if needed.
    pub fn record(path: impl Into<PathBuf>, inner: Arc<dyn LlmBackend>) -> Result<Self, LlmError> {
        let path = path.into();
        let entries = load(&path, false)?;
        Ok(Self {
            path,
            mode: CassetteMode::Record,
            model: inner.model_identifier().to_string(),
            inner: Some(inner),
            entries: Mutex::new(entries),
            inner_calls: AtomicUsize::new(0),
        })
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Number of requests forwarded to the inner backend.
    pub fn inner_calls(&self) -> usize {
        self.inner_calls.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cassette poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn load(path: &Path, must_exist: bool) -> Result<HashMap<String, String>, LlmError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound && !must_exist => return Ok(HashMap::new()),
        Err(e) => return Err(LlmError::Cassette { path: path.display().to_string(), message: e.to_string() }),
    };
    let entries: Vec<CassetteEntry> = decode_lines(&text, path)
        .map_err(|e| LlmError::Cassette { path: path.display().to_string(), message: e.to_string() })?;
    Ok(entries.into_iter().map(|e| (e.fingerprint, e.response)).collect())
}

impl LlmBackend for CassetteBackend {
    fn model_identifier(&self) -> &str {
        &self.model
    }

    fn invoke(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let fp = fingerprint(&self.model, request);
        // Held across the inner call so concurrent identical requests are
        // recorded once.
        let mut entries = self.entries.lock().expect("cassette poisoned");
        if let Some(hit) = entries.get(&fp) {
            return Ok(hit.clone());
        }
        let inner = match (self.mode, &self.inner) {
            (CassetteMode::Record, Some(inner)) => inner,
            _ => return Err(LlmError::CassetteMiss { fingerprint: fp, model: self.model.clone() }),
        };
        self.inner_calls.fetch_add(1, Ordering::SeqCst);
        let response = inner.invoke(request)?;
        let entry = CassetteEntry {
            fingerprint: fp.clone(),
            model: self.model.clone(),
            system: request.system.clone(),
            prompt: request.prompt.clone(),
            temperature: request.temperature,
            response: response.clone(),
        };
        let cassette_err = |e: std::io::Error| LlmError::Cassette { path: self.path.display().to_string(), message: e.to_string() };
        if let Some(parent) = self.path.parent() {
            fs::create_dir_all(parent).map_err(cassette_err)?;
        }
        let mut line = encode_record(&entry).map_err(cassette_err)?;
        line.push('\n');
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(cassette_err)?;
        entries.insert(fp, response.clone());
        Ok(response)
    }
}
