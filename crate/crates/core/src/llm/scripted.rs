use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{LlmBackend, LlmError, LlmRequest};

type Responder = Box<dyn Fn(&LlmRequest) -> Result<String, LlmError> + Send + Sync>;

/// Deterministic backend driven by a closure or a fixed response queue.
/// Records every request it receives.
pub struct ScriptedBackend {
    model: String,
    responder: Responder,
    calls: AtomicUsize,
    log: Mutex<Vec<LlmRequest>>,
}

impl ScriptedBackend {
    pub fn new<F>(model: impl Into<String>, responder: F) -> Self
    where
        F: Fn(&LlmRequest) -> Result<String, LlmError> + Send + Sync + 'static,
    {
        Self { model: model.into(), responder: Box::new(responder), calls: AtomicUsize::new(0), log: Mutex::new(Vec::new()) }
    }

    /// Returns the given responses in order, then fails.
    pub fn sequence<I, S>(model: impl Into<String>, responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let queue: Mutex<VecDeque<String>> = Mutex::new(responses.into_iter().map(Into::into).collect());
        Self::new(model, move |_| {
            queue
                .lock()
                .expect("script queue poisoned")
                .pop_front()
                .ok_or_else(|| LlmError::Script("response queue exhausted".into()))
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<LlmRequest> {
        self.log.lock().expect("script log poisoned").clone()
    }
}

impl LlmBackend for ScriptedBackend {
    fn model_identifier(&self) -> &str {
        &self.model
    }

    fn invoke(&self, request: &LlmRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().expect("script log poisoned").push(request.clone());
        (self.responder)(request)
    }
}
