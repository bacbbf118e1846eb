use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    check_audio_size, BackendError, CallKey, ChatBackend, ChatReply, ChatRequest, ChatResponse, RequestKind, TimedText,
    Transcriber, Transcription, Usage,
};
use crate::media::AudioSegment;

/// One line of a scripted transcript.
///
/// Chat entries carry `reply`; transcription entries carry `segments`.
/// `request_digest` is only checked in strict mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub step: u32,
    pub kind: RequestKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<ChatReply>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<TimedText>>,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_digest: Option<String>,
}

impl ScriptEntry {
    pub fn reply(step: u32, kind: RequestKind, reply: ChatReply, usage: Usage) -> Self {
        ScriptEntry { step, kind, reply: Some(reply), segments: None, usage, request_digest: None }
    }

    pub fn transcription(step: u32, segments: Vec<TimedText>, usage: Usage) -> Self {
        ScriptEntry {
            step,
            kind: RequestKind::Transcription,
            reply: None,
            segments: Some(segments),
            usage,
            request_digest: None,
        }
    }

    pub fn key(&self) -> CallKey {
        CallKey::new(self.step, self.kind)
    }
}

/// Ordered scripted responses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScriptedTranscript {
    pub entries: Vec<ScriptEntry>,
}

impl ScriptedTranscript {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        ScriptedTranscript { entries }
    }

    /// Parses JSONL; blank lines and lines starting with `#` are skipped.
    pub fn parse_jsonl(text: &str) -> Result<Self, BackendError> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(line)
                .map_err(|e| BackendError::Config(format!("transcript line {}: {e}", n + 1)))?;
            entries.push(entry);
        }
        Ok(ScriptedTranscript { entries })
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_jsonl(&text)
    }

    pub fn to_jsonl(&self) -> String {
        self.entries.iter().map(|e| serde_json::to_string(e).expect("script entries serialize") + "\n").collect()
    }
}

/// Replays a [`ScriptedTranscript`]. Lookups do not consume entries, so the
/// same key always yields the same response.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    entries: HashMap<CallKey, ScriptEntry>,
    strict: bool,
}

impl ScriptedBackend {
    pub fn new(transcript: ScriptedTranscript) -> Result<Self, BackendError> {
        let mut entries = HashMap::new();
        for entry in transcript.entries {
            let key = entry.key();
            let is_transcription = key.kind == RequestKind::Transcription;
            if is_transcription != entry.segments.is_some() || entry.reply.is_some() == is_transcription {
                return Err(BackendError::Config(format!(
                    "entry for step {} kind {} has the wrong payload",
                    key.step, key.kind
                )));
            }
            if entries.insert(key, entry).is_some() {
                return Err(BackendError::Config(format!("duplicate entry for step {} kind {}", key.step, key.kind)));
            }
        }
        Ok(ScriptedBackend { entries, strict: false })
    }

    /// Also require each request's content digest to match the entry's
    /// `request_digest`, when one is recorded.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    fn lookup(&self, key: CallKey) -> Result<&ScriptEntry, BackendError> {
        self.entries.get(&key).ok_or(BackendError::ScriptExhausted { step: key.step, kind: key.kind })
    }
}

impl ChatBackend for ScriptedBackend {
    fn chat(&self, key: CallKey, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let entry = self.lookup(key)?;
        if self.strict {
            if let Some(expected) = &entry.request_digest {
                if *expected != req.content_digest() {
                    return Err(BackendError::DigestMismatch { step: key.step, kind: key.kind });
                }
            }
        }
        let reply = entry.reply.clone().ok_or(BackendError::ScriptExhausted { step: key.step, kind: key.kind })?;
        Ok(ChatResponse { reply, usage: entry.usage })
    }
}

impl Transcriber for ScriptedBackend {
    fn transcribe(&self, key: CallKey, seg: &AudioSegment) -> Result<Transcription, BackendError> {
        check_audio_size(seg)?;
        let entry = self.lookup(key)?;
        Ok(Transcription { segments: entry.segments.clone().unwrap_or_default(), usage: entry.usage })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::DecodingParams;
    use crate::media::FrameRange;
    use crate::tools::RawToolCall;
    use serde_json::json;

    fn req() -> ChatRequest {
        ChatRequest {
            system: String::new(),
            user: "u".into(),
            images: vec![],
            tools: vec![],
            decoding: DecodingParams::default(),
        }
    }

    fn segment(bytes: usize) -> AudioSegment {
        AudioSegment {
            ranges: vec![FrameRange::new(0, 10).unwrap()],
            requested: vec![FrameRange::new(0, 10).unwrap()],
            bytes: vec![0; bytes],
            encoding: "wav".into(),
            bitrate_bps: 16_000,
            truncated: false,
        }
    }

    #[test]
    fn replays_tool_calls_deterministically() {
        let text = r#"
# step 1
{"step":1,"kind":"controller","reply":{"tool_call":{"name":"scene_snapper","arguments":{"frame_ranges":[{"start_frame":0,"end_frame":9}],"reason":"look"}}},"usage":{"prompt_tokens":5000,"completion_tokens":200}}
"#;
        let backend = ScriptedBackend::new(ScriptedTranscript::parse_jsonl(text).unwrap()).unwrap();
        let key = CallKey::new(1, RequestKind::Controller);
        let a = backend.chat(key, &req()).unwrap();
        let b = backend.chat(key, &req()).unwrap();
        assert_eq!(a, b);
        assert!(matches!(a.reply, ChatReply::ToolCall(RawToolCall { ref name, .. }) if name == "scene_snapper"));
        assert_eq!(a.usage, Usage::new(5000, 200));
    }

    #[test]
    fn exhaustion_is_distinct() {
        let backend = ScriptedBackend::new(ScriptedTranscript::default()).unwrap();
        let err = backend.chat(CallKey::new(4, RequestKind::SceneCaption), &req()).unwrap_err();
        assert_eq!(err, BackendError::ScriptExhausted { step: 4, kind: RequestKind::SceneCaption });
    }

    #[test]
    fn transcription_fixtures() {
        let segs = vec![TimedText { start_s: 31.0, end_s: 33.5, text: "hello".into() }];
        let backend = ScriptedBackend::new(ScriptedTranscript::new(vec![
            ScriptEntry::transcription(2, segs.clone(), Usage::default()),
            ScriptEntry::transcription(3, vec![], Usage::default()),
        ]))
        .unwrap();
        let out = backend.transcribe(CallKey::new(2, RequestKind::Transcription), &segment(100)).unwrap();
        assert_eq!(out.segments, segs);
        let silent = backend.transcribe(CallKey::new(3, RequestKind::Transcription), &segment(100)).unwrap();
        assert!(silent.segments.is_empty());
    }

    #[test]
    fn oversize_audio_rejected_locally() {
        let backend = ScriptedBackend::new(ScriptedTranscript::default()).unwrap();
        let err =
            backend.transcribe(CallKey::new(1, RequestKind::Transcription), &segment(26 * 1024 * 1024)).unwrap_err();
        assert!(err.to_string().starts_with("exceeds transcription size cap"));
    }

    #[test]
    fn strict_mode_checks_digests() {
        let mut entry = ScriptEntry::reply(1, RequestKind::Controller, ChatReply::Text("A".into()), Usage::default());
        entry.request_digest = Some(req().content_digest());
        let backend = ScriptedBackend::new(ScriptedTranscript::new(vec![entry])).unwrap().strict(true);
        let key = CallKey::new(1, RequestKind::Controller);
        assert!(backend.chat(key, &req()).is_ok());
        let mut other = req();
        other.user = "changed".into();
        assert_eq!(
            backend.chat(key, &other).unwrap_err(),
            BackendError::DigestMismatch { step: 1, kind: RequestKind::Controller }
        );
    }

    #[test]
    fn rejects_duplicates_and_wrong_payloads() {
        let e = ScriptEntry::reply(1, RequestKind::Controller, ChatReply::Text("A".into()), Usage::default());
        assert!(ScriptedBackend::new(ScriptedTranscript::new(vec![e.clone(), e])).is_err());
        let bad: ScriptEntry =
            serde_json::from_value(json!({"step":1,"kind":"transcription","reply":{"text":"x"}})).unwrap();
        assert!(ScriptedBackend::new(ScriptedTranscript::new(vec![bad])).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let t = ScriptedTranscript::new(vec![
            ScriptEntry::reply(1, RequestKind::Controller, ChatReply::Text("C".into()), Usage::new(10, 2)),
            ScriptEntry::transcription(2, vec![], Usage::default()),
        ]);
        assert_eq!(ScriptedTranscript::parse_jsonl(&t.to_jsonl()).unwrap(), t);
    }
}
