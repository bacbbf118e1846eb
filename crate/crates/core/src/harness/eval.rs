use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::{DurationClass, QARecord};
use super::trace::TraceLog;
use crate::backend::{BackendError, Backends};
use crate::controller::{AgentConfig, Engine};
use crate::media::{open_source, MediaError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records to evaluate")]
    Empty,
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Drop records whose video cannot be opened from the denominator
    /// instead of scoring them incorrect.
    pub exclude_missing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Answered,
    Aborted,
    MissingVideo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub gold: char,
    pub predicted: Option<char>,
    pub correct: bool,
    pub forced: bool,
    pub steps_used: u32,
    pub status: ItemStatus,
    /// Whether the item counts toward accuracy.
    pub scored: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: u64,
    pub scored: u64,
    pub percent: f64,
}

impl Accuracy {
    fn add(&mut self, correct: bool) {
        self.scored += 1;
        self.correct += correct as u64;
        self.percent = 100.0 * self.correct as f64 / self.scored as f64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: u64,
    pub overall: Accuracy,
    pub by_duration: BTreeMap<DurationClass, Accuracy>,
    pub by_domain: BTreeMap<String, Accuracy>,
    pub items: Vec<ItemResult>,
}

/// Report plus one trace per record, in record order.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub traces: Vec<(String, TraceLog)>,
}

/// Runs every record and scores letters against gold. Aborted runs count as
/// incorrect. `backends_for` supplies the backends for each record, which
/// lets scripted evaluations use one transcript per record.
pub fn evaluate<F>(
    records: &[QARecord],
    config: &AgentConfig,
    backends_for: F,
    options: &EvalOptions,
) -> Result<EvalOutcome, EvalError>
where
    F: Fn(&QARecord) -> Result<Backends, BackendError> + Sync,
{
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    config.validate().map_err(|e| EvalError::Config(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| EvalError::Config(e.to_string()))?;

    let runs: Vec<(ItemResult, TraceLog)> =
        pool.install(|| records.par_iter().map(|r| run_one(r, config, &backends_for, options)).collect());

    let mut report = EvalReport {
        total: records.len() as u64,
        overall: Accuracy::default(),
        by_duration: BTreeMap::new(),
        by_domain: BTreeMap::new(),
        items: Vec::with_capacity(records.len()),
    };
    let mut traces = Vec::with_capacity(records.len());
    for (record, (item, trace)) in records.iter().zip(runs) {
        if item.scored {
            report.overall.add(item.correct);
            report.by_duration.entry(record.duration_class()).or_default().add(item.correct);
            report.by_domain.entry(record.domain.clone()).or_default().add(item.correct);
        }
        traces.push((record.id.clone(), trace));
        report.items.push(item);
    }
    Ok(EvalOutcome { report, traces })
}

fn run_one<F>(
    record: &QARecord,
    config: &AgentConfig,
    backends_for: &F,
    options: &EvalOptions,
) -> (ItemResult, TraceLog)
where
    F: Fn(&QARecord) -> Result<Backends, BackendError>,
{
    let mut item = ItemResult {
        id: record.id.clone(),
        gold: record.gold,
        predicted: None,
        correct: false,
        forced: false,
        steps_used: 0,
        status: ItemStatus::Aborted,
        scored: true,
        abort_reason: None,
        total_tokens: 0,
    };
    let source = match open_source(&record.video_path).and_then(|s| s.probe().map(|_| s)) {
        Ok(s) => s,
        Err(e) => {
            if matches!(e, MediaError::Unreadable(_)) {
                item.status = ItemStatus::MissingVideo;
                item.scored = !options.exclude_missing;
            }
            item.abort_reason = Some(e.to_string());
            return (item, TraceLog::new());
        }
    };
    let engine = match backends_for(record).map(|b| Engine::new(config.clone(), b)) {
        Ok(Ok(engine)) => engine,
        Ok(Err(e)) => {
            item.abort_reason = Some(e.to_string());
            return (item, TraceLog::new());
        }
        Err(e) => {
            item.abort_reason = Some(e.to_string());
            return (item, TraceLog::new());
        }
    };
    match engine.run_source(source.as_ref(), &record.question, &record.options) {
        Ok(out) => {
            item.status = ItemStatus::Answered;
            item.predicted = Some(out.answer.letter);
            item.correct = out.answer.letter == record.gold;
            item.forced = out.answer.forced;
            item.steps_used = out.answer.steps_used;
            item.total_tokens = crate::costmodel::tally(&out.ledger).grand_total;
            (item, out.trace)
        }
        Err(failure) => {
            item.abort_reason = Some(failure.error.to_string());
            item.steps_used = failure.at_step.saturating_sub(1);
            item.total_tokens = crate::costmodel::tally(&failure.ledger).grand_total;
            (item, failure.trace)
        }
    }
}
