use thiserror::Error;

use super::trace::{TraceError, TraceLog, TraceRecord};
use crate::backend::{BackendError, Backends, ScriptedBackend};
use crate::controller::{ConfigError, Engine, FinalAnswer};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("version mismatch: trace from {found}, this engine is {expected}")]
    VersionMismatch { found: String, expected: String },
    #[error("trace truncation: no final record")]
    Truncated,
    #[error("trace records an aborted run: {0}")]
    Aborted(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("replayed run failed: {0}")]
    RunFailed(String),
    #[error("replay diverged from the recorded trace at line {line}")]
    Diverged { line: usize },
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub answer: FinalAnswer,
    /// The trace regenerated by the replayed run.
    pub trace: TraceLog,
}

/// Re-runs a recorded run against its own recorded model replies and checks
/// that the regenerated trace matches the original record for record.
///
/// Request digests are checked too, so any drift in prompts, memory or
/// frame pixels is reported as a backend digest mismatch.
pub fn replay(trace: &TraceLog) -> Result<ReplayOutcome, ReplayError> {
    let header = trace.header().ok_or(TraceError::MissingHeader)?;
    if header.engine_version != crate::ENGINE_VERSION {
        return Err(ReplayError::VersionMismatch {
            found: header.engine_version.clone(),
            expected: crate::ENGINE_VERSION.to_owned(),
        });
    }
    match trace.records().last() {
        Some(TraceRecord::Final(_)) => {}
        Some(TraceRecord::Abort(a)) => return Err(ReplayError::Aborted(a.reason.clone())),
        _ => return Err(ReplayError::Truncated),
    }

    let backend = ScriptedBackend::new(trace.transcript())?.strict(true);
    let engine = Engine::new(header.config.clone(), Backends::scripted(backend))?;
    let out = engine
        .run(&header.video.path, &header.question, &header.options)
        .map_err(|f| ReplayError::RunFailed(f.error.to_string()))?;

    let original = trace.records();
    let regenerated = out.trace.records();
    if let Some(i) = (0..original.len().max(regenerated.len())).find(|&i| original.get(i) != regenerated.get(i)) {
        return Err(ReplayError::Diverged { line: i + 1 });
    }
    Ok(ReplayOutcome { answer: out.answer, trace: out.trace })
}
