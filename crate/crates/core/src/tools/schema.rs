//! Tool schemas and validation of model-issued tool calls.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::prompts::TOOLS_LIST;
use super::{NumFrames, ToolCall, ToolName};
use crate::media::FrameRange;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidationError {
    #[error("unknown tool name `{0}`")]
    UnknownTool(String),
    #[error("missing required field: {0}")]
    MissingField(String),
    #[error("{field} outside enum")]
    OutsideEnum { field: String, value: String },
    #[error("{field} must be of type {expected}")]
    WrongType { field: String, expected: String },
    #[error("malformed range: start_frame {start} > end_frame {end}")]
    MalformedRange { start: u64, end: u64 },
    #[error("{0} must not be negative")]
    Negative(String),
    #[error("{0} must not be empty")]
    Empty(String),
    #[error("tool arguments must be a JSON object: {0}")]
    BadArguments(String),
}

/// One function definition from the shipped tools list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    #[serde(rename = "parameters")]
    pub parameter_schema: Value,
}

/// A tool call as it arrives from a model: a name and untyped arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawToolCall {
    pub name: String,
    pub arguments: Value,
}

/// The shipped tool definitions, kept alongside their verbatim source text.
#[derive(Debug)]
pub struct ToolSet {
    source: &'static str,
    wire: Vec<Value>,
    schemas: Vec<ToolSchema>,
}

#[derive(Deserialize)]
struct WireEntry {
    function: ToolSchema,
}

impl ToolSet {
    /// The three shipped tools.
    pub fn shipped() -> &'static ToolSet {
        static SET: OnceLock<ToolSet> = OnceLock::new();
        SET.get_or_init(|| {
            let wire: Vec<Value> = serde_json::from_str(TOOLS_LIST).expect("shipped tools list is valid JSON");
            let schemas = wire
                .iter()
                .map(|v| {
                    serde_json::from_value::<WireEntry>(v.clone())
                        .expect("shipped tool entry has a function block")
                        .function
                })
                .collect();
            ToolSet { source: TOOLS_LIST, wire, schemas }
        })
    }

    /// Serialized form, byte-identical to the shipped asset.
    pub fn render(&self) -> &str {
        self.source
    }

    /// Entries in chat-completions `tools` format.
    pub fn wire(&self) -> &[Value] {
        &self.wire
    }

    pub fn schemas(&self) -> &[ToolSchema] {
        &self.schemas
    }

    pub fn get(&self, name: &str) -> Option<&ToolSchema> {
        self.schemas.iter().find(|s| s.name == name)
    }
}

/// Checks `raw` against its schema and converts it to a typed [`ToolCall`].
///
/// Range bounds against the video length are not checked here; that happens
/// at dispatch so the model sees the error as an observation.
pub fn validate_call(raw: &RawToolCall, tools: &ToolSet) -> Result<ToolCall, ValidationError> {
    let schema = tools.get(&raw.name).ok_or_else(|| ValidationError::UnknownTool(raw.name.clone()))?;
    let name: ToolName = raw.name.parse()?;
    let args = match &raw.arguments {
        Value::Object(_) => &raw.arguments,
        Value::String(s) => {
            return Err(ValidationError::BadArguments(truncate(s, 80)));
        }
        other => return Err(ValidationError::BadArguments(other.to_string())),
    };
    check(args, &schema.parameter_schema, "")?;

    let reason = required_text(args, "reason")?;
    match name {
        ToolName::SceneSnapper => {
            let num_frames = match args.get("num_frames") {
                Some(v) => NumFrames::try_from(v.as_u64().unwrap_or(0)).map_err(|_| outside_enum("num_frames", v))?,
                None => NumFrames::default(),
            };
            Ok(ToolCall::SceneSnapper {
                frame_ranges: range_list(&args["frame_ranges"], "frame_ranges")?,
                num_frames,
                reason,
            })
        }
        ToolName::AudioTranscripter => {
            Ok(ToolCall::AudioTranscripter { frame_ranges: range_list(&args["frame_ranges"], "frame_ranges")?, reason })
        }
        ToolName::ClipAnalyzer => Ok(ToolCall::ClipAnalyzer {
            frame_range: range(&args["frame_range"], "frame_range")?,
            question: required_text(args, "question")?,
            reason,
        }),
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((cut, _)) => format!("{}...", &s[..cut]),
        None => s.to_owned(),
    }
}

fn outside_enum(field: &str, v: &Value) -> ValidationError {
    ValidationError::OutsideEnum { field: field.to_owned(), value: v.to_string() }
}

fn required_text(args: &Value, field: &str) -> Result<String, ValidationError> {
    let text = args[field].as_str().unwrap_or_default().trim();
    if text.is_empty() {
        return Err(ValidationError::Empty(field.to_owned()));
    }
    Ok(text.to_owned())
}

fn frame_index(v: &Value, field: &str) -> Result<u64, ValidationError> {
    match v.as_u64() {
        Some(n) => Ok(n),
        None if v.as_i64().is_some() => Err(ValidationError::Negative(field.to_owned())),
        None => Err(ValidationError::WrongType { field: field.to_owned(), expected: "integer".into() }),
    }
}

fn range(v: &Value, field: &str) -> Result<FrameRange, ValidationError> {
    let start = frame_index(&v["start_frame"], &format!("{field}.start_frame"))?;
    let end = frame_index(&v["end_frame"], &format!("{field}.end_frame"))?;
    FrameRange::new(start, end).map_err(|_| ValidationError::MalformedRange { start, end })
}

fn range_list(v: &Value, field: &str) -> Result<Vec<FrameRange>, ValidationError> {
    let items = v.as_array().map(Vec::as_slice).unwrap_or_default();
    if items.is_empty() {
        return Err(ValidationError::Empty(field.to_owned()));
    }
    items.iter().enumerate().map(|(i, item)| range(item, &format!("{field}[{i}]"))).collect()
}

/// Validates `value` against the JSON-schema subset used by the tools list:
/// `type`, `properties`, `required`, `items` and `enum`.
fn check(value: &Value, schema: &Value, path: &str) -> Result<(), ValidationError> {
    let field = || if path.is_empty() { "arguments".to_owned() } else { path.to_owned() };
    if let Some(expected) = schema.get("type").and_then(Value::as_str) {
        let ok = match expected {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "integer" => value.is_i64() || value.is_u64(),
            "number" => value.is_number(),
            "string" => value.is_string(),
            "boolean" => value.is_boolean(),
            _ => true,
        };
        if !ok {
            return Err(ValidationError::WrongType { field: field(), expected: expected.to_owned() });
        }
    }
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            return Err(outside_enum(&field(), value));
        }
    }
    if let Some(required) = schema.get("required").and_then(Value::as_array) {
        for key in required.iter().filter_map(Value::as_str) {
            if value.get(key).is_none_or(Value::is_null) {
                let full = if path.is_empty() { key.to_owned() } else { format!("{path}.{key}") };
                return Err(ValidationError::MissingField(full));
            }
        }
    }
    if let (Some(props), Some(obj)) = (schema.get("properties").and_then(Value::as_object), value.as_object()) {
        for (key, sub) in props {
            if let Some(v) = obj.get(key) {
                let sub_path = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
                check(v, sub, &sub_path)?;
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), value.as_array()) {
        for (i, v) in arr.iter().enumerate() {
            check(v, items, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}
