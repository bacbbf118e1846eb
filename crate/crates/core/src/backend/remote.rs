use std::time::Duration;

use base64::Engine as _;
use reqwest::blocking::{multipart, Client};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    check_audio_size, BackendError, CallKey, ChatBackend, ChatReply, ChatRequest, ChatResponse, Role, TimedText,
    Transcriber, Transcription, Usage,
};
use crate::media::AudioSegment;
use crate::tools::RawToolCall;

/// Endpoint and model for one role. There is no default vendor: the base
/// URL, key and model must all be configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub api_base: String,
    #[serde(skip_serializing)]
    pub api_key: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

fn default_timeout() -> u64 {
    120
}

impl RemoteConfig {
    pub const ENV_BASE: &'static str = "VIDLOOP_API_BASE";
    pub const ENV_KEY: &'static str = "VIDLOOP_API_KEY";

    pub fn model_env(role: Role) -> &'static str {
        match role {
            Role::Controller => "VIDLOOP_CONTROLLER_MODEL",
            Role::Understanding => "VIDLOOP_UNDERSTANDING_MODEL",
            Role::Transcription => "VIDLOOP_TRANSCRIPTION_MODEL",
        }
    }

    /// Reads the endpoint from the environment. `model` overrides the
    /// role's model variable when given.
    pub fn from_env(role: Role, model: Option<&str>) -> Result<Self, BackendError> {
        let var = |name: &str| {
            std::env::var(name)
                .ok()
                .filter(|v| !v.trim().is_empty())
                .ok_or_else(|| BackendError::Config(format!("{name} is not set")))
        };
        let model = match model {
            Some(m) => m.to_owned(),
            None => var(Self::model_env(role))?,
        };
        Ok(RemoteConfig {
            api_base: var(Self::ENV_BASE)?,
            api_key: var(Self::ENV_KEY)?,
            model,
            timeout_s: default_timeout(),
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.api_base.trim_end_matches('/'), path)
    }

    fn client(&self) -> Result<Client, BackendError> {
        if self.api_base.is_empty() || self.model.is_empty() {
            return Err(BackendError::Config("api_base and model are required".into()));
        }
        Client::builder()
            .timeout(Duration::from_secs(self.timeout_s))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))
    }
}

fn transport(e: reqwest::Error) -> BackendError {
    BackendError::Transport { status: e.status().map(|s| s.as_u16()), message: e.to_string() }
}

/// Maps an HTTP response to its JSON body or a classified error.
fn read_json(resp: reqwest::blocking::Response) -> Result<Value, BackendError> {
    let status = resp.status().as_u16();
    let body = resp.text().map_err(transport)?;
    match status {
        200..=299 => serde_json::from_str(&body).map_err(|e| BackendError::Protocol(format!("invalid JSON body: {e}"))),
        401 | 403 => Err(BackendError::Auth(format!("HTTP {status}"))),
        408 | 429 | 500..=599 => Err(BackendError::Transport { status: Some(status), message: body }),
        _ => Err(BackendError::Protocol(format!("HTTP {status}: {body}"))),
    }
}

fn usage_from(v: &Value) -> Usage {
    Usage::new(v["usage"]["prompt_tokens"].as_u64().unwrap_or(0), v["usage"]["completion_tokens"].as_u64().unwrap_or(0))
}

/// Builds the chat-completions request body.
pub(crate) fn chat_body(model: &str, req: &ChatRequest) -> Result<Value, BackendError> {
    let mut content = vec![json!({"type": "text", "text": req.user})];
    for img in &req.images {
        let png = img.raster.to_png().map_err(|e| BackendError::Protocol(e.to_string()))?;
        let b64 = base64::engine::general_purpose::STANDARD.encode(png);
        content.push(json!({
            "type": "image_url",
            "image_url": {"url": format!("data:image/png;base64,{b64}")},
        }));
    }
    let mut messages = Vec::new();
    if !req.system.is_empty() {
        messages.push(json!({"role": "system", "content": req.system}));
    }
    messages.push(json!({"role": "user", "content": content}));

    let mut body = json!({
        "model": model,
        "messages": messages,
        "temperature": req.decoding.temperature,
    });
    if let Some(m) = req.decoding.max_tokens {
        body["max_tokens"] = json!(m);
    }
    if let Some(s) = req.decoding.seed {
        body["seed"] = json!(s);
    }
    if !req.tools.is_empty() {
        body["tools"] = Value::Array(req.tools.clone());
        body["tool_choice"] = json!("auto");
    }
    Ok(body)
}

/// Extracts the reply from a chat-completions response body.
pub(crate) fn parse_chat(v: &Value) -> Result<ChatResponse, BackendError> {
    let message = &v["choices"][0]["message"];
    if message.is_null() {
        return Err(BackendError::Protocol("response has no choices".into()));
    }
    let usage = usage_from(v);
    if let Some(call) = message["tool_calls"].as_array().and_then(|c| c.first()) {
        let name = call["function"]["name"]
            .as_str()
            .ok_or_else(|| BackendError::Protocol("tool call without a name".into()))?;
        // Arguments arrive as a JSON-encoded string; keep undecodable text as
        // a string so validation reports it.
        let arguments = match &call["function"]["arguments"] {
            Value::String(s) => serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.clone())),
            other => other.clone(),
        };
        return Ok(ChatResponse {
            reply: ChatReply::ToolCall(RawToolCall { name: name.to_owned(), arguments }),
            usage,
        });
    }
    let text = match &message["content"] {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join(""),
        _ => String::new(),
    };
    Ok(ChatResponse { reply: ChatReply::Text(text), usage })
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let client = config.client()?;
        Ok(RemoteBackend { config, client })
    }
}

impl ChatBackend for RemoteBackend {
    fn chat(&self, key: CallKey, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = chat_body(&self.config.model, req)?;
        tracing::debug!(step = key.step, kind = %key.kind, model = %self.config.model, "chat request");
        let resp = self
            .client
            .post(self.config.url("chat/completions"))
            .bearer_auth(&self.config.api_key)
            .json(&body)
            .send()
            .map_err(transport)?;
        parse_chat(&read_json(resp)?)
    }
}

pub struct RemoteTranscriber {
    config: RemoteConfig,
    client: Client,
}

impl RemoteTranscriber {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let client = config.client()?;
        Ok(RemoteTranscriber { config, client })
    }
}

pub(crate) fn parse_transcription(v: &Value) -> Result<Transcription, BackendError> {
    let segments = match v["segments"].as_array() {
        Some(segs) => segs
            .iter()
            .map(|s| TimedText {
                start_s: s["start"].as_f64().unwrap_or(0.0),
                end_s: s["end"].as_f64().unwrap_or(0.0),
                text: s["text"].as_str().unwrap_or_default().trim().to_owned(),
            })
            .filter(|s| !s.text.is_empty())
            .collect(),
        None => match v["text"].as_str().map(str::trim) {
            Some("") | None => Vec::new(),
            Some(t) => {
                vec![TimedText { start_s: 0.0, end_s: v["duration"].as_f64().unwrap_or(0.0), text: t.to_owned() }]
            }
        },
    };
    Ok(Transcription { segments, usage: usage_from(v) })
}

impl Transcriber for RemoteTranscriber {
    fn transcribe(&self, key: CallKey, seg: &AudioSegment) -> Result<Transcription, BackendError> {
        check_audio_size(seg)?;
        tracing::debug!(step = key.step, bytes = seg.byte_size(), "transcription request");
        let part = multipart::Part::bytes(seg.bytes.clone())
            .file_name(format!("segment.{}", seg.encoding))
            .mime_str(if seg.encoding == "mp3" { "audio/mpeg" } else { "audio/wav" })
            .map_err(transport)?;
        let form = multipart::Form::new()
            .text("model", self.config.model.clone())
            .text("response_format", "verbose_json")
            .text("temperature", "0")
            .part("file", part);
        let resp = self
            .client
            .post(self.config.url("audio/transcriptions"))
            .bearer_auth(&self.config.api_key)
            .multipart(form)
            .send()
            .map_err(transport)?;
        parse_transcription(&read_json(resp)?)
    }
}
