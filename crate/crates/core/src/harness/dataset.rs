use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("dataset schema error at line {line}, column {column}: {message}")]
    Schema { line: usize, column: usize, message: String },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
}

/// Duration buckets used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationClass {
    /// Up to 4 minutes.
    Short,
    /// Up to 30 minutes.
    Medium,
    Long,
}

impl DurationClass {
    pub fn of(duration_s: f64) -> Self {
        if duration_s <= 240.0 {
            DurationClass::Short
        } else if duration_s <= 1800.0 {
            DurationClass::Medium
        } else {
            DurationClass::Long
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    video_path: String,
    question: String,
    options: Vec<String>,
    gold: String,
    domain: String,
    task: String,
    duration_s: f64,
}

/// One multiple-choice question about one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord")]
pub struct QARecord {
    pub id: String,
    pub video_path: String,
    pub question: String,
    pub options: Vec<String>,
    pub gold: char,
    pub domain: String,
    pub task: String,
    pub duration_s: f64,
}

impl QARecord {
    pub fn duration_class(&self) -> DurationClass {
        DurationClass::of(self.duration_s)
    }
}

impl TryFrom<RawRecord> for QARecord {
    type Error = String;

    fn try_from(r: RawRecord) -> Result<Self, String> {
        let ctx = |msg: String| format!("record `{}`: {msg}", r.id);
        if r.id.trim().is_empty() {
            return Err("record with empty id".into());
        }
        if r.options.len() != 4 {
            return Err(ctx(format!("expected 4 options, got {}", r.options.len())));
        }
        let gold = match r.gold.trim() {
            g @ ("A" | "B" | "C" | "D") => g.chars().next().expect("non-empty"),
            other => return Err(ctx(format!("gold `{other}` is not one of A, B, C, D"))),
        };
        if !(r.duration_s.is_finite() && r.duration_s >= 0.0) {
            return Err(ctx("duration_s must be a non-negative number".into()));
        }
        Ok(QARecord {
            id: r.id,
            video_path: r.video_path,
            question: r.question,
            options: r.options,
            gold,
            domain: r.domain,
            task: r.task,
            duration_s: r.duration_s,
        })
    }
}

/// Parses a JSON array of records.
pub fn parse_dataset(text: &str) -> Result<Vec<QARecord>, DatasetError> {
    let records: Vec<QARecord> = serde_json::from_str(text).map_err(|e| DatasetError::Schema {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert(r.id.as_str()) {
            return Err(DatasetError::DuplicateId(r.id.clone()));
        }
    }
    Ok(records)
}

pub fn load_dataset(path: &Path) -> Result<Vec<QARecord>, DatasetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    parse_dataset(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, options: usize, gold: &str) -> String {
        let opts: Vec<String> = (0..options).map(|i| format!("\"o{i}\"")).collect();
        format!(
            r#"{{"id":"{id}","video_path":"v.mp4","question":"q","options":[{}],"gold":"{gold}","domain":"d","task":"t","duration_s":60}}"#,
            opts.join(",")
        )
    }

    #[test]
    fn loads_valid_records() {
        let text = format!("[\n{},\n{},\n{}\n]", record("a", 4, "A"), record("b", 4, "D"), record("c", 4, "B"));
        let rs = parse_dataset(&text).unwrap();
        assert_eq!(rs.len(), 3);
        assert_eq!(rs[1].gold, 'D');
        assert_eq!(rs[0].duration_class(), DurationClass::Short);
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let text = format!("[\n{},\n{}]", record("a", 4, "A"), record("b", 3, "A"));
        match parse_dataset(&text) {
            Err(DatasetError::Schema { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("record `b`: expected 4 options"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = format!("[{}]", record("a", 4, "E"));
        assert!(matches!(parse_dataset(&text), Err(DatasetError::Schema { .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = format!("[{},{}]", record("a", 4, "A"), record("a", 4, "B"));
        assert!(matches!(parse_dataset(&text), Err(DatasetError::DuplicateId(id)) if id == "a"));
    }

    #[test]
    fn duration_classes() {
        assert_eq!(DurationClass::of(240.0), DurationClass::Short);
        assert_eq!(DurationClass::of(241.0), DurationClass::Medium);
        assert_eq!(DurationClass::of(3600.0), DurationClass::Long);
    }
}
