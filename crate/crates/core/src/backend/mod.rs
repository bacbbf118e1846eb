//! Model backends: chat with tools and images, and audio transcription.
//!
//! [`ChatBackend`] and [`Transcriber`] are implemented by [`RemoteBackend`] /
//! [`RemoteTranscriber`] (chat-completions style HTTP) and by
//! [`ScriptedBackend`], which replays a JSONL transcript keyed by
//! `(step, request kind)`.

mod remote;
mod scripted;
mod session;

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::media::{AudioSegment, Raster};
use crate::tools::RawToolCall;

pub use remote::{RemoteBackend, RemoteConfig, RemoteTranscriber};
pub use scripted::{ScriptEntry, ScriptedBackend, ScriptedTranscript};
pub use session::Session;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("script exhausted: no entry for step {step} kind {kind}")]
    ScriptExhausted { step: u32, kind: RequestKind },
    #[error("exceeds transcription size cap: {bytes} bytes > {cap} bytes")]
    OversizeAudio { bytes: u64, cap: u64 },
    #[error("request digest mismatch at step {step} kind {kind}")]
    DigestMismatch { step: u32, kind: RequestKind },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    /// Only transport failures are retried; content problems are not.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport { .. })
    }
}

/// What a request is for. Together with the loop step it keys scripted replies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Controller,
    ForcedAnswer,
    SceneCaption,
    ClipAnalysis,
    Transcription,
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RequestKind::Controller => "controller",
            RequestKind::ForcedAnswer => "forced_answer",
            RequestKind::SceneCaption => "scene_caption",
            RequestKind::ClipAnalysis => "clip_analysis",
            RequestKind::Transcription => "transcription",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallKey {
    pub step: u32,
    pub kind: RequestKind,
}

impl CallKey {
    pub fn new(step: u32, kind: RequestKind) -> Self {
        CallKey { step, kind }
    }
}

/// Which configured model a call goes to; also the ledger role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Controller,
    Understanding,
    Transcription,
}

/// Pinned decoding parameters. Defaults are the most deterministic setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingParams {
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams { temperature: 0.0, max_tokens: None, seed: Some(0) }
    }
}

#[derive(Debug, Clone)]
pub struct ImageAttachment {
    /// Stable description, e.g. `mosaic[0,359,...]` or `frame[930]`.
    pub label: String,
    pub raster: Arc<Raster>,
}

#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub images: Vec<ImageAttachment>,
    /// Tool definitions in chat-completions format; empty for plain prompts.
    pub tools: Vec<Value>,
    pub decoding: DecodingParams,
}

impl ChatRequest {
    fn digest_value(&self, with_pixels: bool) -> Value {
        let images: Vec<Value> = self
            .images
            .iter()
            .map(|img| if with_pixels { json!([img.label, img.raster.digest()]) } else { json!(img.label) })
            .collect();
        let tool_names: Vec<&str> = self.tools.iter().filter_map(|t| t["function"]["name"].as_str()).collect();
        json!({
            "system": self.system,
            "user": self.user,
            "images": images,
            "tools": tool_names,
            "decoding": self.decoding,
        })
    }

    /// Digest over text, image labels, tool names and decoding parameters.
    pub fn digest(&self) -> String {
        sha256_hex(self.digest_value(false).to_string())
    }

    /// Like [`Self::digest`] but also covering image pixel content.
    pub fn content_digest(&self) -> String {
        sha256_hex(self.digest_value(true).to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Usage { prompt_tokens, completion_tokens }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

/// Either plain text or a single tool call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatReply {
    Text(String),
    ToolCall(RawToolCall),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub reply: ChatReply,
    pub usage: Usage,
}

/// A transcript line with offsets in seconds from the start of the segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedText {
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcription {
    pub segments: Vec<TimedText>,
    #[serde(default)]
    pub usage: Usage,
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, key: CallKey, req: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

pub trait Transcriber: Send + Sync {
    fn transcribe(&self, key: CallKey, seg: &AudioSegment) -> Result<Transcription, BackendError>;
}

/// Rejects segments above the upload cap before any network traffic.
pub fn check_audio_size(seg: &AudioSegment) -> Result<(), BackendError> {
    let cap = crate::media::AUDIO_BYTE_CAP;
    if seg.byte_size() > cap {
        return Err(BackendError::OversizeAudio { bytes: seg.byte_size(), cap });
    }
    Ok(())
}

/// Retries transport failures with exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 2, base_delay_ms: 500 }
    }
}

impl RetryPolicy {
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, BackendError>) -> Result<T, BackendError> {
        let mut attempt = 0;
        loop {
            match op() {
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    let delay = self.base_delay_ms.saturating_mul(1 << attempt);
                    tracing::warn!(attempt, delay_ms = delay, error = %e, "retrying backend call");
                    if delay > 0 {
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Wraps a backend with a [`RetryPolicy`].
pub struct Retrying<B> {
    pub inner: B,
    pub policy: RetryPolicy,
}

impl<B: ChatBackend> ChatBackend for Retrying<B> {
    fn chat(&self, key: CallKey, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.policy.run(|| self.inner.chat(key, req))
    }
}

impl<B: Transcriber> Transcriber for Retrying<B> {
    fn transcribe(&self, key: CallKey, seg: &AudioSegment) -> Result<Transcription, BackendError> {
        self.policy.run(|| self.inner.transcribe(key, seg))
    }
}

/// Backends for the three model roles of a run.
#[derive(Clone)]
pub struct Backends {
    pub controller: Arc<dyn ChatBackend>,
    pub understanding: Arc<dyn ChatBackend>,
    pub transcriber: Arc<dyn Transcriber>,
}

impl Backends {
    /// All three roles served by one scripted transcript.
    pub fn scripted(script: ScriptedBackend) -> Self {
        let shared = Arc::new(script);
        Backends { controller: shared.clone(), understanding: shared.clone(), transcriber: shared }
    }

    /// HTTP backends for each role, wrapped in `retry`.
    pub fn remote(
        controller: RemoteConfig,
        understanding: RemoteConfig,
        transcription: RemoteConfig,
        retry: RetryPolicy,
    ) -> Result<Self, BackendError> {
        Ok(Backends {
            controller: Arc::new(Retrying { inner: RemoteBackend::new(controller)?, policy: retry }),
            understanding: Arc::new(Retrying { inner: RemoteBackend::new(understanding)?, policy: retry }),
            transcriber: Arc::new(Retrying { inner: RemoteTranscriber::new(transcription)?, policy: retry }),
        })
    }
}
