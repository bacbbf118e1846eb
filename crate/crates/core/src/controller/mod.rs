//! The observe/think/act/memorize loop.
//!
//! Each iteration rebuilds the controller prompt from scratch out of the
//! system asset, video info and the rendered memory, attaches the current
//! long-term mosaics, and asks the controller model for either a tool call
//! or an answer. Tool calls are validated and dispatched; invalid calls and
//! recoverable tool errors are recorded in working memory so the model sees
//! them next step. After `step_budget` iterations without an answer, one
//! forced-answer request is made.

mod answer;
mod config;

use serde_json::json;
use thiserror::Error;

use crate::backend::{
    BackendError, Backends, CallKey, ChatReply, ChatRequest, ImageAttachment, RequestKind, Role, Session,
};
use crate::costmodel::{tally, TokenLedger};
use crate::digest::short_digest;
use crate::harness::trace::{AbortTrace, FinalTrace, StepTrace, TraceHeader, TraceLog, TraceRecord};
use crate::media::{open_source, MediaError, MediaSource, VideoHandle};
use crate::memory::{init_memory, HierMemory, MemoryError, TraceEntry};
use crate::tools::{
    dispatch, prompts, validate_call, RawToolCall, ToolCall, ToolContext, ToolError, ToolName, ToolSet,
};

pub use answer::{parse_answer, UnparseableAnswer};
pub use config::{AgentConfig, ConfigError, ModelNames};

/// What the controller chose at one step.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Tool(ToolCall),
    Answer { letter: char, rationale: String },
}

/// Mutable state of one run.
#[derive(Debug, Clone)]
pub struct LoopState {
    /// Current iteration, starting at 1.
    pub t: u32,
    pub memory: HierMemory,
    pub question: String,
    pub options: Vec<String>,
    pub answer: Option<char>,
}

impl LoopState {
    pub fn finished(&self) -> bool {
        self.answer.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalAnswer {
    pub letter: char,
    /// Produced by the forced-answer request after the budget ran out.
    pub forced: bool,
    /// Controller iterations used, not counting the forced-answer request.
    pub steps_used: u32,
    pub trace_id: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Tool(ToolError),
    #[error(transparent)]
    UnparseableAnswer(#[from] UnparseableAnswer),
}

impl From<ToolError> for RunError {
    fn from(e: ToolError) -> Self {
        match e {
            ToolError::Backend(b) => RunError::Backend(b),
            ToolError::Media(m) => RunError::Media(m),
            ToolError::Memory(m) => RunError::Memory(m),
            other => RunError::Tool(other),
        }
    }
}

/// A completed run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub answer: FinalAnswer,
    pub memory: HierMemory,
    pub trace: TraceLog,
    pub ledger: TokenLedger,
}

/// An aborted run, with the partial trace ending in an `abort` record.
#[derive(Debug, Clone, Error)]
#[error("run aborted at step {at_step}: {error}")]
pub struct RunFailure {
    pub error: RunError,
    pub at_step: u32,
    pub trace: TraceLog,
    pub ledger: TokenLedger,
}

/// How one step ended, as seen by a step observer.
#[derive(Debug, Clone, PartialEq)]
pub enum StepKind {
    Dispatched(ToolName),
    /// Invalid call, unparseable reply or recoverable tool error.
    Rejected {
        action: String,
        error: String,
    },
    Answered(char),
}

pub struct StepEvent<'a> {
    pub iteration: u32,
    pub kind: StepKind,
    pub before: &'a HierMemory,
    pub after: &'a HierMemory,
}

/// Prompts for one controller request.
#[derive(Debug, Clone)]
pub struct BuiltPrompts {
    pub system: String,
    pub user: String,
    pub attachments: Vec<ImageAttachment>,
}

/// Builds the controller prompts from the current state only.
pub fn build_prompts(state: &LoopState, video: &VideoHandle) -> BuiltPrompts {
    BuiltPrompts {
        system: prompts::AGENT_SYSTEM.to_owned(),
        user: prompts::render_agent_user(video, &state.memory.render_snapshot(), &state.question, &state.options),
        attachments: state
            .memory
            .long_term
            .mosaics
            .iter()
            .map(|m| ImageAttachment { label: m.label(), raster: m.canvas.clone() })
            .collect(),
    }
}

/// A question to run, for [`Engine::run_many`].
#[derive(Debug, Clone)]
pub struct RunJob {
    pub locator: String,
    pub question: String,
    pub options: Vec<String>,
}

/// Runs questions against a fixed config and set of backends.
#[derive(Clone)]
pub struct Engine {
    config: AgentConfig,
    backends: Backends,
    tools: &'static ToolSet,
}

type Observer<'o> = Option<&'o mut dyn FnMut(&StepEvent<'_>)>;

struct RunCtx<'r, 'b> {
    source: &'r dyn MediaSource,
    video: &'r VideoHandle,
    session: Session<'b>,
    trace: TraceLog,
}

impl RunCtx<'_, '_> {
    fn flush_exchanges(&mut self) -> u64 {
        let mut tokens = 0;
        for e in self.session.drain_exchanges() {
            tokens += e.usage.total();
            self.trace.push(TraceRecord::Exchange(e));
        }
        tokens
    }
}

impl Engine {
    pub fn new(config: AgentConfig, backends: Backends) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Engine { config, backends, tools: ToolSet::shipped() })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// Opens `locator` and runs one question.
    pub fn run(&self, locator: &str, question: &str, options: &[String]) -> Result<RunOutcome, RunFailure> {
        match open_source(locator) {
            Ok(source) => self.run_source(source.as_ref(), question, options),
            Err(e) => Err(self.early_failure(e.into())),
        }
    }

    pub fn run_source(
        &self,
        source: &dyn MediaSource,
        question: &str,
        options: &[String],
    ) -> Result<RunOutcome, RunFailure> {
        self.run_inner(source, question, options, None)
    }

    /// Like [`Self::run_source`], calling `observer` after every iteration.
    pub fn run_observed(
        &self,
        source: &dyn MediaSource,
        question: &str,
        options: &[String],
        observer: &mut dyn FnMut(&StepEvent<'_>),
    ) -> Result<RunOutcome, RunFailure> {
        self.run_inner(source, question, options, Some(observer))
    }

    /// Runs independent jobs concurrently, at most `parallelism` at a time.
    /// Results come back in job order.
    pub fn run_many(&self, jobs: &[RunJob]) -> Vec<Result<RunOutcome, RunFailure>> {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(self.config.parallelism).build().expect("thread pool");
        pool.install(|| jobs.par_iter().map(|j| self.run(&j.locator, &j.question, &j.options)).collect())
    }

    fn early_failure(&self, error: RunError) -> RunFailure {
        let mut trace = TraceLog::new();
        trace.push(TraceRecord::Abort(AbortTrace { at_step: 0, reason: error.to_string(), memory: None }));
        RunFailure { error, at_step: 0, trace, ledger: TokenLedger::new() }
    }

    fn check_inputs(question: &str, options: &[String]) -> Result<(), RunError> {
        if question.trim().is_empty() {
            return Err(RunError::InvalidInput("question is empty".into()));
        }
        if options.len() != 4 {
            return Err(RunError::InvalidInput(format!("expected 4 options, got {}", options.len())));
        }
        if options.iter().any(|o| o.trim().is_empty()) {
            return Err(RunError::InvalidInput("options must not be empty".into()));
        }
        Ok(())
    }

    fn header(&self, video: &VideoHandle, question: &str, options: &[String]) -> TraceRecord {
        TraceRecord::Header(Box::new(TraceHeader {
            engine_version: crate::ENGINE_VERSION.to_owned(),
            config: self.config.clone(),
            config_digest: self.config.digest(),
            asset_digests: prompts::asset_digests().into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
            video: video.clone(),
            question: question.to_owned(),
            options: options.to_vec(),
        }))
    }

    fn run_inner(
        &self,
        source: &dyn MediaSource,
        question: &str,
        options: &[String],
        mut observer: Observer<'_>,
    ) -> Result<RunOutcome, RunFailure> {
        if let Err(e) = Self::check_inputs(question, options) {
            return Err(self.early_failure(e));
        }
        let video = match source.probe() {
            Ok(v) => v,
            Err(e) => return Err(self.early_failure(e.into())),
        };
        let memory = match init_memory(source, &video, self.config.initial_sample) {
            Ok(m) => m,
            Err(e) => return Err(self.early_failure(e.into())),
        };

        let mut ctx = RunCtx { source, video: &video, session: Session::new(&self.backends), trace: TraceLog::new() };
        ctx.trace.push(self.header(&video, question, options));
        let mut state =
            LoopState { t: 1, memory, question: question.to_owned(), options: options.to_vec(), answer: None };

        match self.drive(&mut state, &mut ctx, &mut observer) {
            Ok(answer) => {
                let ledger = ctx.session.into_ledger();
                ctx.trace.push(TraceRecord::Final(FinalTrace {
                    letter: answer.letter,
                    forced: answer.forced,
                    steps_used: answer.steps_used,
                    trace_id: answer.trace_id.clone(),
                    total_tokens: tally(&ledger).grand_total,
                    memory: state.memory.dump(),
                }));
                Ok(RunOutcome { answer, memory: state.memory, trace: ctx.trace, ledger })
            }
            Err(error) => {
                ctx.flush_exchanges();
                ctx.trace.push(TraceRecord::Abort(AbortTrace {
                    at_step: state.t,
                    reason: error.to_string(),
                    memory: Some(state.memory.dump()),
                }));
                Err(RunFailure { error, at_step: state.t, trace: ctx.trace, ledger: ctx.session.into_ledger() })
            }
        }
    }

    fn drive(
        &self,
        state: &mut LoopState,
        ctx: &mut RunCtx<'_, '_>,
        observer: &mut Observer<'_>,
    ) -> Result<FinalAnswer, RunError> {
        let trace_id = ctx.trace.id().unwrap_or_default();
        while state.t <= self.config.step_budget {
            let before = observer.as_ref().map(|_| state.memory.clone());
            let kind = self.step(state, ctx)?;
            if let (Some(obs), Some(before)) = (observer.as_mut(), before.as_ref()) {
                obs(&StepEvent { iteration: state.t - 1, kind: kind.clone(), before, after: &state.memory });
            }
            if let StepKind::Answered(letter) = kind {
                return Ok(FinalAnswer { letter, forced: false, steps_used: state.t - 1, trace_id });
            }
        }
        let letter = self.forced_answer(state, ctx)?;
        state.answer = Some(letter);
        Ok(FinalAnswer { letter, forced: true, steps_used: self.config.step_budget, trace_id })
    }

    fn request(&self, prompts: BuiltPrompts, with_tools: bool) -> ChatRequest {
        ChatRequest {
            system: prompts.system,
            user: prompts.user,
            images: prompts.attachments,
            tools: if with_tools { self.tools.wire().to_vec() } else { Vec::new() },
            decoding: self.config.decoding.clone(),
        }
    }

    /// One controller iteration. Advances `state.t` unless it fails.
    fn step(&self, state: &mut LoopState, ctx: &mut RunCtx<'_, '_>) -> Result<StepKind, RunError> {
        let t = state.t;
        let req = self.request(build_prompts(state, ctx.video), true);
        let request_digest = req.digest();
        let resp = ctx.session.chat(Role::Controller, CallKey::new(t, RequestKind::Controller), &req)?;

        let mut params_digest = None;
        let mut observation = None;
        let (action_label, kind) = match resp.reply {
            ChatReply::Text(text) => match parse_answer(&text) {
                Ok(letter) => {
                    state.answer = Some(letter);
                    ("answer".to_owned(), StepKind::Answered(letter))
                }
                Err(e) => {
                    let error = e.to_string();
                    let digest = short_digest(&text);
                    state.memory.append_trace(TraceEntry {
                        iteration: t,
                        reasoning: text,
                        chosen_action: "answer".into(),
                        params_digest: digest.clone(),
                        error: Some(error.clone()),
                    })?;
                    params_digest = Some(digest);
                    ("answer".to_owned(), StepKind::Rejected { action: "answer".into(), error })
                }
            },
            ChatReply::ToolCall(raw) => {
                let (label, digest, kind, obs) = self.act(state, ctx, t, raw)?;
                params_digest = Some(digest);
                observation = obs;
                (label, kind)
            }
        };

        let step_tokens = ctx.flush_exchanges();
        if step_tokens > self.config.per_step_token_budget {
            tracing::warn!(
                step = t,
                tokens = step_tokens,
                budget = self.config.per_step_token_budget,
                "step over token budget"
            );
        }
        let error = match &kind {
            StepKind::Rejected { error, .. } => Some(error.clone()),
            _ => None,
        };
        ctx.trace.push(TraceRecord::Step(StepTrace {
            iteration: t,
            request_digest,
            action: action_label,
            params_digest,
            observation,
            error,
            memory_digest: short_digest(state.memory.render_snapshot()),
            step_tokens,
        }));
        state.t += 1;
        Ok(kind)
    }

    /// Validates and dispatches a tool call, recording the reasoning trace.
    fn act(
        &self,
        state: &mut LoopState,
        ctx: &mut RunCtx<'_, '_>,
        t: u32,
        raw: RawToolCall,
    ) -> Result<(String, String, StepKind, Option<serde_json::Value>), RunError> {
        let call = match validate_call(&raw, self.tools) {
            Ok(call) => call,
            Err(v) => {
                let digest = short_digest(serde_json::to_string(&raw).expect("raw calls serialize"));
                let error = format!("invalid tool call: {v}");
                state.memory.append_trace(TraceEntry {
                    iteration: t,
                    reasoning: raw.arguments.get("reason").and_then(|r| r.as_str()).unwrap_or_default().to_owned(),
                    chosen_action: raw.name.clone(),
                    params_digest: digest.clone(),
                    error: Some(error.clone()),
                })?;
                let kind = StepKind::Rejected { action: raw.name.clone(), error };
                return Ok((raw.name, digest, kind, None));
            }
        };

        let digest = call.params_digest();
        let mut tool_ctx = ToolContext {
            source: ctx.source,
            video: ctx.video,
            session: &mut ctx.session,
            n2: self.config.n2,
            decoding: &self.config.decoding,
            options: &state.options,
        };
        let outcome = dispatch(&call, &mut state.memory, &mut tool_ctx, t);
        let (kind, error, obs) = match outcome {
            Ok(entry) => (StepKind::Dispatched(call.name()), None, Some(json!(entry))),
            Err(e) if e.is_recoverable() => {
                let error = e.to_string();
                (StepKind::Rejected { action: call.name().to_string(), error: error.clone() }, Some(error), None)
            }
            Err(e) => return Err(e.into()),
        };
        state.memory.append_trace(TraceEntry {
            iteration: t,
            reasoning: call.reason().to_owned(),
            chosen_action: call.name().to_string(),
            params_digest: digest.clone(),
            error,
        })?;
        Ok((call.name().to_string(), digest, kind, obs))
    }

    /// The single request made after the step budget runs out.
    fn forced_answer(&self, state: &mut LoopState, ctx: &mut RunCtx<'_, '_>) -> Result<char, RunError> {
        let mut prompts = build_prompts(state, ctx.video);
        prompts.user.push_str(prompts::FORCED_ANSWER_SUFFIX);
        let req = self.request(prompts, false);
        let key = CallKey::new(self.config.step_budget + 1, RequestKind::ForcedAnswer);
        let resp = ctx.session.chat(Role::Controller, key, &req)?;
        ctx.flush_exchanges();
        let text = match resp.reply {
            ChatReply::Text(t) => t,
            ChatReply::ToolCall(call) => return Err(UnparseableAnswer(format!("tool call `{}`", call.name)).into()),
        };
        Ok(parse_answer(&text)?)
    }
}
