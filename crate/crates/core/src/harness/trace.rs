//! JSONL trace logs: one record per event, header first.
//!
//! ```text
//! {"record":"header","engine_version":"vidloop/0.1.0",...}
//! {"record":"exchange","step":1,"kind":"controller","reply":{...},"usage":{...},"request_digest":"..."}
//! {"record":"step","iteration":1,"action":"scene_snapper",...}
//! {"record":"final","letter":"C","forced":false,...}
//! ```
//!
//! A complete trace ends with a `final` or `abort` record. `exchange`
//! records carry every model reply, so a trace doubles as a scripted
//! transcript for replay.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::{ScriptEntry, ScriptedTranscript};
use crate::controller::AgentConfig;
use crate::digest::short_digest;
use crate::media::VideoHandle;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot access trace {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace has no header record")]
    MissingHeader,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub engine_version: String,
    pub config: AgentConfig,
    pub config_digest: String,
    pub asset_digests: BTreeMap<String, String>,
    pub video: VideoHandle,
    pub question: String,
    pub options: Vec<String>,
}

/// One controller iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub iteration: u32,
    pub request_digest: String,
    /// Tool name, `answer`, or the raw name of a rejected call.
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_digest: Option<String>,
    /// The appended result entry, for successful dispatches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Digest of the rendered memory snapshot after the step.
    pub memory_digest: String,
    pub step_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalTrace {
    pub letter: char,
    pub forced: bool,
    pub steps_used: u32,
    pub trace_id: String,
    pub total_tokens: u64,
    pub memory: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortTrace {
    pub at_step: u32,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Header(Box<TraceHeader>),
    Exchange(ScriptEntry),
    Step(StepTrace),
    Final(FinalTrace),
    Abort(AbortTrace),
}

/// Append-only trace of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceLog {
    records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn header(&self) -> Option<&TraceHeader> {
        match self.records.first() {
            Some(TraceRecord::Header(h)) => Some(h),
            _ => None,
        }
    }

    /// Short digest of the header line; stable across replays.
    pub fn id(&self) -> Option<String> {
        self.records.first().map(|r| short_digest(line(r)))
    }

    pub fn is_complete(&self) -> bool {
        matches!(self.records.last(), Some(TraceRecord::Final(_) | TraceRecord::Abort(_)))
    }

    pub fn final_record(&self) -> Option<&FinalTrace> {
        match self.records.last() {
            Some(TraceRecord::Final(f)) => Some(f),
            _ => None,
        }
    }

    /// Model replies recorded in this trace, as a replay script.
    pub fn transcript(&self) -> ScriptedTranscript {
        ScriptedTranscript::new(
            self.records
                .iter()
                .filter_map(|r| match r {
                    TraceRecord::Exchange(e) => Some(e.clone()),
                    _ => None,
                })
                .collect(),
        )
    }

    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| line(r) + "\n").collect()
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, TraceError> {
        let mut records = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let record =
                serde_json::from_str(raw).map_err(|e| TraceError::Parse { line: i + 1, message: e.to_string() })?;
            records.push(record);
        }
        let log = TraceLog { records };
        if log.header().is_none() {
            return Err(TraceError::MissingHeader);
        }
        Ok(log)
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| TraceError::Io { path: path.display().to_string(), source })?;
        Self::parse_jsonl(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        std::fs::write(path, self.to_jsonl())
            .map_err(|source| TraceError::Io { path: path.display().to_string(), source })
    }
}

fn line(record: &TraceRecord) -> String {
    serde_json::to_string(record).expect("trace records serialize")
}
