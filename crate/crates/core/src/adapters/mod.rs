//! Boundary to external models.
//!
//! Every model role (transcription, punctuation restoration, number
//! normalization, forced alignment) speaks the same newline-delimited JSON
//! protocol:
//!
//! ```text
//! request  {"id":"u1","task":"align","audio_path":"a/u1.wav","text":"xin chào"}
//! response {"id":"u1","text":null,"words":[{"w":"xin","s":0.0,"e":0.5},...],"error":null}
//! ```
//!
//! A process adapter may first print a handshake line `{"role":..,"version":..}`.

mod http;
pub mod mock;
mod process;

pub use http::HttpBackend;
pub use process::ProcessBackend;

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::AlignedWord;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Transcribe,
    Punctuate,
    NormalizeNumbers,
    Align,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Transcribe => "transcribe",
            Task::Punctuate => "punctuate",
            Task::NormalizeNumbers => "normalize_numbers",
            Task::Align => "align",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterRequest {
    pub id: String,
    pub task: Task,
    #[serde(default)]
    pub audio_path: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
}

impl AdapterRequest {
    pub fn transcribe(id: &str, audio_path: &str) -> Self {
        AdapterRequest {
            id: id.to_string(),
            task: Task::Transcribe,
            audio_path: Some(audio_path.to_string()),
            text: None,
        }
    }

    pub fn with_text(id: &str, task: Task, text: &str) -> Self {
        AdapterRequest {
            id: id.to_string(),
            task,
            audio_path: None,
            text: Some(text.to_string()),
        }
    }

    pub fn align(id: &str, audio_path: &str, text: &str) -> Self {
        AdapterRequest {
            id: id.to_string(),
            task: Task::Align,
            audio_path: Some(audio_path.to_string()),
            text: Some(text.to_string()),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let needs_audio = matches!(self.task, Task::Transcribe | Task::Align);
        let needs_text = matches!(
            self.task,
            Task::Punctuate | Task::NormalizeNumbers | Task::Align
        );
        if needs_audio && self.audio_path.is_none() {
            return Err(format!(
                "{} request {:?} needs audio_path",
                self.task.name(),
                self.id
            ));
        }
        if needs_text && self.text.is_none() {
            return Err(format!(
                "{} request {:?} needs text",
                self.task.name(),
                self.id
            ));
        }
        Ok(())
    }
}

/// Word timing as carried on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireWord {
    pub w: String,
    pub s: f64,
    pub e: f64,
}

impl From<&WireWord> for AlignedWord {
    fn from(w: &WireWord) -> Self {
        AlignedWord::new(w.w.clone(), w.s, w.e)
    }
}

impl From<&AlignedWord> for WireWord {
    fn from(w: &AlignedWord) -> Self {
        WireWord {
            w: w.text.clone(),
            s: w.start_s,
            e: w.end_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterResponse {
    pub id: String,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub words: Option<Vec<WireWord>>,
    #[serde(default)]
    pub error: Option<String>,
}

impl AdapterResponse {
    pub fn text(id: &str, text: impl Into<String>) -> Self {
        AdapterResponse {
            id: id.to_string(),
            text: Some(text.into()),
            words: None,
            error: None,
        }
    }

    pub fn words(id: &str, words: &[AlignedWord]) -> Self {
        AdapterResponse {
            id: id.to_string(),
            text: None,
            words: Some(words.iter().map(WireWord::from).collect()),
            error: None,
        }
    }

    pub fn error(id: &str, message: impl Into<String>) -> Self {
        AdapterResponse {
            id: id.to_string(),
            text: None,
            words: None,
            error: Some(message.into()),
        }
    }

    pub fn aligned_words(&self) -> Option<Vec<AlignedWord>> {
        self.words
            .as_ref()
            .map(|ws| ws.iter().map(AlignedWord::from).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdapterError {
    /// The backend answered with an error for this id.
    #[error("model error: {0}")]
    Model(String),
    /// The response violated the task contract.
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("timed out")]
    Timeout,
}

impl AdapterError {
    /// Transport failures and timeouts may succeed on a later run; the record
    /// is left pending rather than rejected.
    pub fn is_retryable(&self) -> bool {
        matches!(self, AdapterError::Transport(_) | AdapterError::Timeout)
    }
}

pub type Outcome = Result<AdapterResponse, AdapterError>;

/// A model behind the wire protocol. Implementations return one outcome per
/// request, in request order.
pub trait Backend: Send + Sync {
    fn call(&self, requests: &[AdapterRequest]) -> Vec<Outcome>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn call(&self, requests: &[AdapterRequest]) -> Vec<Outcome> {
        (**self).call(requests)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn call(&self, requests: &[AdapterRequest]) -> Vec<Outcome> {
        (**self).call(requests)
    }
}

pub type SharedBackend = Arc<dyn Backend>;

/// Sends a batch and checks every response against its request's task
/// contract. Invalid requests are answered locally and never sent. Errors
/// are isolated per id.
pub fn invoke(backend: &dyn Backend, requests: &[AdapterRequest]) -> Vec<Outcome> {
    let mut results: Vec<Option<Outcome>> = vec![None; requests.len()];
    let mut send = Vec::new();
    let mut slot = Vec::new();
    for (i, r) in requests.iter().enumerate() {
        match r.validate() {
            Ok(()) => {
                send.push(r.clone());
                slot.push(i);
            }
            Err(e) => results[i] = Some(Err(AdapterError::Protocol(e))),
        }
    }
    if !send.is_empty() {
        let outcomes = backend.call(&send);
        let mut by_id: HashMap<String, Outcome> = HashMap::new();
        for (req, out) in send.iter().zip(outcomes) {
            by_id.insert(req.id.clone(), out);
        }
        for (req, i) in send.iter().zip(slot) {
            let out = by_id
                .remove(&req.id)
                .unwrap_or_else(|| Err(AdapterError::Transport("no response".into())));
            results[i] = Some(out.and_then(|resp| check_response(req, resp)));
        }
    }
    results
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

fn check_response(req: &AdapterRequest, resp: AdapterResponse) -> Outcome {
    if resp.id != req.id {
        return Err(AdapterError::Protocol(format!(
            "response id {:?} for request {:?}",
            resp.id, req.id
        )));
    }
    if let Some(e) = resp.error {
        return Err(AdapterError::Model(e));
    }
    let ok = match req.task {
        Task::Align => resp.words.is_some() && resp.text.is_none(),
        _ => resp.text.is_some() && resp.words.is_none(),
    };
    if !ok {
        return Err(AdapterError::Protocol(format!(
            "{} response for {:?} has the wrong payload",
            req.task.name(),
            req.id
        )));
    }
    Ok(resp)
}

/// Startup line printed by process adapters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub role: String,
    pub version: u32,
}

#[derive(Deserialize)]
struct IdOnly {
    id: Option<String>,
}

/// Serves `backend` over a line protocol: one request per input line, one
/// response per output line, after a handshake line. Used to expose the mock
/// backends as a child process.
pub fn serve<R: BufRead, W: Write>(
    backend: &dyn Backend,
    role: &str,
    input: R,
    mut output: W,
) -> std::io::Result<()> {
    let hs = Handshake {
        role: role.to_string(),
        version: PROTOCOL_VERSION,
    };
    writeln!(output, "{}", serde_json::to_string(&hs)?)?;
    output.flush()?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<AdapterRequest>(&line) {
            Ok(req) => match req.validate() {
                Err(e) => AdapterResponse::error(&req.id, e),
                Ok(()) => match backend.call(std::slice::from_ref(&req)).pop() {
                    Some(Ok(r)) => r,
                    Some(Err(e)) => AdapterResponse::error(&req.id, e.to_string()),
                    None => AdapterResponse::error(&req.id, "no response"),
                },
            },
            Err(e) => {
                let id = serde_json::from_str::<IdOnly>(&line)
                    .ok()
                    .and_then(|v| v.id)
                    .unwrap_or_default();
                AdapterResponse::error(&id, format!("malformed request: {e}"))
            }
        };
        writeln!(output, "{}", serde_json::to_string(&resp)?)?;
        output.flush()?;
    }
    Ok(())
}
