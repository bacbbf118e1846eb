//! The three model-facing tools and their dispatch.
//!
//! `scene_snapper` resamples frame ranges into 256-px mosaics, installs them
//! as the long-term pool and captions them. `audio_transcripter` and
//! `clip_analyzer` stage audio or 512-px frames in the short-term pool, query
//! a model, and leave the pool empty again.

pub mod analysis;
pub mod prompts;
pub mod schema;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    BackendError, CallKey, ChatReply, ChatRequest, DecodingParams, ImageAttachment, RequestKind, Role, Session,
    TimedText,
};
use crate::digest::short_digest;
use crate::media::{
    compose_mosaics, extract_audio, extract_frames, sample_ranges, uniform_sample_indices, FrameRange, MediaError,
    MediaSource, Raster, VideoHandle,
};
use crate::memory::{HierMemory, MemoryError, ResultEntry};

pub use analysis::{format_analysis, parse_analysis, ParsedAnalysis, UnparseableAnalysis};
pub use schema::{validate_call, RawToolCall, ToolSchema, ToolSet, ValidationError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    SceneSnapper,
    AudioTranscripter,
    ClipAnalyzer,
}

impl ToolName {
    pub const ALL: [ToolName; 3] = [ToolName::SceneSnapper, ToolName::AudioTranscripter, ToolName::ClipAnalyzer];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::SceneSnapper => "scene_snapper",
            ToolName::AudioTranscripter => "audio_transcripter",
            ToolName::ClipAnalyzer => "clip_analyzer",
        }
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolName {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolName::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| ValidationError::UnknownTool(s.to_owned()))
    }
}

/// Frame count for a scene snapshot; one of 30, 60, 90 or 150.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct NumFrames(u32);

impl NumFrames {
    pub const ALLOWED: [u32; 4] = [30, 60, 90, 150];

    pub fn get(self) -> u32 {
        self.0
    }
}

impl Default for NumFrames {
    fn default() -> Self {
        NumFrames(30)
    }
}

impl TryFrom<u64> for NumFrames {
    type Error = u64;

    fn try_from(n: u64) -> Result<Self, u64> {
        match u32::try_from(n) {
            Ok(v) if Self::ALLOWED.contains(&v) => Ok(NumFrames(v)),
            _ => Err(n),
        }
    }
}

impl TryFrom<u32> for NumFrames {
    type Error = String;

    fn try_from(n: u32) -> Result<Self, String> {
        NumFrames::try_from(n as u64).map_err(|n| format!("{n} not in {:?}", Self::ALLOWED))
    }
}

impl From<NumFrames> for u32 {
    fn from(n: NumFrames) -> u32 {
        n.0
    }
}

/// A validated tool call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ToolCall {
    SceneSnapper { frame_ranges: Vec<FrameRange>, num_frames: NumFrames, reason: String },
    AudioTranscripter { frame_ranges: Vec<FrameRange>, reason: String },
    ClipAnalyzer { frame_range: FrameRange, question: String, reason: String },
}

impl ToolCall {
    pub fn name(&self) -> ToolName {
        match self {
            ToolCall::SceneSnapper { .. } => ToolName::SceneSnapper,
            ToolCall::AudioTranscripter { .. } => ToolName::AudioTranscripter,
            ToolCall::ClipAnalyzer { .. } => ToolName::ClipAnalyzer,
        }
    }

    pub fn reason(&self) -> &str {
        match self {
            ToolCall::SceneSnapper { reason, .. }
            | ToolCall::AudioTranscripter { reason, .. }
            | ToolCall::ClipAnalyzer { reason, .. } => reason,
        }
    }

    pub fn ranges(&self) -> Vec<FrameRange> {
        match self {
            ToolCall::SceneSnapper { frame_ranges, .. } | ToolCall::AudioTranscripter { frame_ranges, .. } => {
                frame_ranges.clone()
            }
            ToolCall::ClipAnalyzer { frame_range, .. } => vec![*frame_range],
        }
    }

    /// Canonical JSON (sorted keys) of the call.
    pub fn canonical_json(&self) -> String {
        serde_json::to_value(self).expect("tool calls serialize").to_string()
    }

    pub fn params_digest(&self) -> String {
        short_digest(self.canonical_json())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub range: FrameRange,
    pub text: String,
}

/// The observation a tool returns to the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToolOutput {
    Caption { caption: String },
    Transcript { segments: Vec<TranscriptLine> },
    Analysis { answer: String, confidence: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolError {
    #[error("range {range} lies outside the video ({total_frames} frames, last index {})", total_frames - 1)]
    OutOfBounds { range: FrameRange, total_frames: u64 },
    #[error(transparent)]
    Unparseable(#[from] UnparseableAnalysis),
    #[error("{kind} reply was a tool call, expected text")]
    NonTextReply { kind: RequestKind },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

impl ToolError {
    /// Recoverable errors become observations for the controller; the rest
    /// abort the run.
    pub fn is_recoverable(&self) -> bool {
        matches!(self, ToolError::OutOfBounds { .. } | ToolError::Unparseable(_) | ToolError::NonTextReply { .. })
    }
}

/// Everything a tool needs besides memory.
pub struct ToolContext<'s, 'b> {
    pub source: &'s dyn MediaSource,
    pub video: &'s VideoHandle,
    pub session: &'s mut Session<'b>,
    /// Frames sampled per clip analysis.
    pub n2: u32,
    pub decoding: &'s DecodingParams,
    /// Options of the main question; filled into the clip-analysis prompt.
    pub options: &'s [String],
}

/// Clamps ranges that run past the last frame and rejects ranges that start
/// past it. Returns the scoped ranges and one notice per clamp.
pub fn scope_ranges(ranges: &[FrameRange], video: &VideoHandle) -> Result<(Vec<FrameRange>, Vec<String>), ToolError> {
    let last = video.last_frame();
    let mut notices = Vec::new();
    let mut out = Vec::with_capacity(ranges.len());
    for &r in ranges {
        if r.start_frame > last {
            return Err(ToolError::OutOfBounds { range: r, total_frames: video.total_frames });
        }
        if r.end_frame > last {
            let clamped = FrameRange { start_frame: r.start_frame, end_frame: last };
            notices.push(format!("range {r} clamped to {clamped} (video has {} frames)", video.total_frames));
            out.push(clamped);
        } else {
            out.push(r);
        }
    }
    Ok((out, notices))
}

/// Maps an offset in seconds into the concatenated audio of `ranges` back to
/// a global frame index.
pub fn offset_to_frame(ranges: &[FrameRange], video: &VideoHandle, seconds: f64) -> u64 {
    let mut offset = video.seconds_to_frame(seconds.max(0.0));
    for r in ranges {
        if offset < r.len() {
            return r.start_frame + offset;
        }
        offset -= r.len();
    }
    ranges.last().map_or(0, |r| r.end_frame)
}

fn text_reply(reply: ChatReply, kind: RequestKind) -> Result<String, ToolError> {
    match reply {
        ChatReply::Text(t) => Ok(t),
        ChatReply::ToolCall(_) => Err(ToolError::NonTextReply { kind }),
    }
}

struct Observation {
    intervals: Vec<FrameRange>,
    output: ToolOutput,
    notices: Vec<String>,
}

fn run_scene_snapper(
    ctx: &mut ToolContext<'_, '_>,
    mem: &mut HierMemory,
    iteration: u32,
    frame_ranges: &[FrameRange],
    num_frames: NumFrames,
) -> Result<Observation, ToolError> {
    let (ranges, notices) = scope_ranges(frame_ranges, ctx.video)?;
    let indices = sample_ranges(&ranges, num_frames.get() as u64)?;
    let frames = extract_frames(ctx.source, ctx.video, &indices, 256)?;
    let mosaics = compose_mosaics(&frames)?;
    let req = ChatRequest {
        system: String::new(),
        user: prompts::render_scene_caption(frames.len(), &ranges),
        images: mosaics.iter().map(|m| ImageAttachment { label: m.label(), raster: m.canvas.clone() }).collect(),
        tools: Vec::new(),
        decoding: ctx.decoding.clone(),
    };
    let kind = RequestKind::SceneCaption;
    let resp = ctx.session.chat(Role::Understanding, CallKey::new(iteration, kind), &req)?;
    let caption = text_reply(resp.reply, kind)?.trim().to_owned();
    mem.set_long_term(ranges.clone(), mosaics, iteration)?;
    Ok(Observation { intervals: ranges, output: ToolOutput::Caption { caption }, notices })
}

fn run_audio_transcripter(
    ctx: &mut ToolContext<'_, '_>,
    mem: &mut HierMemory,
    iteration: u32,
    frame_ranges: &[FrameRange],
) -> Result<Observation, ToolError> {
    let (ranges, mut notices) = scope_ranges(frame_ranges, ctx.video)?;
    let segment = match extract_audio(ctx.source, ctx.video, &ranges) {
        Ok(seg) => seg,
        Err(MediaError::NoAudioTrack) => {
            notices.push("video has no audio track; no speech to transcribe".into());
            return Ok(Observation { intervals: ranges, output: ToolOutput::Transcript { segments: vec![] }, notices });
        }
        Err(e) => return Err(e.into()),
    };
    if segment.truncated {
        let covered: Vec<String> = segment.ranges.iter().map(ToString::to_string).collect();
        notices.push(format!("audio exceeded the upload cap; only {} transcribed", covered.join(", ")));
    }
    mem.stage_short_term(Vec::new(), Some(segment), iteration)?;
    let staged = mem.short_term.audio.as_ref().expect("audio was just staged");
    let transcription = ctx.session.transcribe(iteration, staged)?;
    let segments = transcription
        .segments
        .into_iter()
        .map(|TimedText { start_s, end_s, text }| {
            let start = offset_to_frame(&staged.ranges, ctx.video, start_s);
            let end = offset_to_frame(&staged.ranges, ctx.video, end_s.max(start_s)).max(start);
            TranscriptLine { range: FrameRange { start_frame: start, end_frame: end }, text }
        })
        .collect();
    Ok(Observation { intervals: ranges, output: ToolOutput::Transcript { segments }, notices })
}

fn run_clip_analyzer(
    ctx: &mut ToolContext<'_, '_>,
    mem: &mut HierMemory,
    iteration: u32,
    frame_range: FrameRange,
    question: &str,
) -> Result<Observation, ToolError> {
    let (ranges, mut notices) = scope_ranges(&[frame_range], ctx.video)?;
    let range = ranges[0];
    let indices = uniform_sample_indices(range, ctx.n2 as u64)?;
    let frames = extract_frames(ctx.source, ctx.video, &indices, 512)?;
    mem.stage_short_term(frames, None, iteration)?;
    let staged = &mem.short_term.frames;
    let req = ChatRequest {
        system: String::new(),
        user: prompts::render_clip_analyzer(staged.len(), range, question, ctx.options),
        images: staged
            .iter()
            .map(|f| ImageAttachment {
                label: format!("frame[{}]", f.global_index),
                raster: Arc::new(Raster::new(f.pixels.clone())),
            })
            .collect(),
        tools: Vec::new(),
        decoding: ctx.decoding.clone(),
    };
    let kind = RequestKind::ClipAnalysis;
    let resp = ctx.session.chat(Role::Understanding, CallKey::new(iteration, kind), &req)?;
    let parsed = parse_analysis(&text_reply(resp.reply, kind)?)?;
    notices.extend(parsed.warning);
    Ok(Observation {
        intervals: ranges,
        output: ToolOutput::Analysis { answer: parsed.answer, confidence: parsed.confidence },
        notices,
    })
}

/// Runs `call`, appends its [`ResultEntry`] on success and always leaves the
/// short-term pool empty.
pub fn dispatch(
    call: &ToolCall,
    mem: &mut HierMemory,
    ctx: &mut ToolContext<'_, '_>,
    iteration: u32,
) -> Result<ResultEntry, ToolError> {
    let outcome = match call {
        ToolCall::SceneSnapper { frame_ranges, num_frames, .. } => {
            run_scene_snapper(ctx, mem, iteration, frame_ranges, *num_frames)
        }
        ToolCall::AudioTranscripter { frame_ranges, .. } => run_audio_transcripter(ctx, mem, iteration, frame_ranges),
        ToolCall::ClipAnalyzer { frame_range, question, .. } => {
            run_clip_analyzer(ctx, mem, iteration, *frame_range, question)
        }
    };
    mem.clear_short_term();
    let obs = outcome?;
    let entry = ResultEntry {
        iteration,
        intervals: obs.intervals,
        tool: call.name(),
        output: obs.output,
        notices: obs.notices,
    };
    mem.append_result(entry.clone())?;
    Ok(entry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Backends, ScriptEntry, ScriptedBackend, ScriptedTranscript, Usage};
    use crate::media::{SyntheticAudio, SyntheticVideo};
    use crate::memory::init_memory;

    fn backends(entries: Vec<ScriptEntry>) -> Backends {
        Backends::scripted(ScriptedBackend::new(ScriptedTranscript::new(entries)).unwrap())
    }

    fn text(step: u32, kind: RequestKind, t: &str) -> ScriptEntry {
        ScriptEntry::reply(step, kind, ChatReply::Text(t.into()), Usage::new(100, 10))
    }

    fn range(a: u64, b: u64) -> FrameRange {
        FrameRange::new(a, b).unwrap()
    }

    struct Fixture {
        video: SyntheticVideo,
        handle: VideoHandle,
        options: Vec<String>,
        decoding: DecodingParams,
    }

    impl Fixture {
        fn new(video: SyntheticVideo) -> Self {
            let handle = video.probe().unwrap();
            Fixture {
                video,
                handle,
                options: ["a", "b", "c", "d"].map(String::from).to_vec(),
                decoding: DecodingParams::default(),
            }
        }

        fn run(&self, b: &Backends, calls: &[ToolCall]) -> (HierMemory, Vec<Result<ResultEntry, ToolError>>) {
            let mut mem = init_memory(&self.video, &self.handle, 30).unwrap();
            let mut session = Session::new(b);
            let mut ctx = ToolContext {
                source: &self.video,
                video: &self.handle,
                session: &mut session,
                n2: 10,
                decoding: &self.decoding,
                options: &self.options,
            };
            let out = calls
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let r = dispatch(c, &mut mem, &mut ctx, i as u32 + 1);
                    assert!(mem.short_term.is_empty());
                    r
                })
                .collect();
            (mem, out)
        }
    }

    fn scene(ranges: Vec<FrameRange>) -> ToolCall {
        ToolCall::SceneSnapper { frame_ranges: ranges, num_frames: NumFrames::default(), reason: "look".into() }
    }

    fn audio(ranges: Vec<FrameRange>) -> ToolCall {
        ToolCall::AudioTranscripter { frame_ranges: ranges, reason: "listen".into() }
    }

    fn clip(r: FrameRange) -> ToolCall {
        ToolCall::ClipAnalyzer { frame_range: r, question: "what happens?".into(), reason: "inspect".into() }
    }

    #[test]
    fn scene_snapper_replaces_long_term_pool() {
        let fx = Fixture::new(SyntheticVideo::new(1800, 30.0));
        let b = backends(vec![text(1, RequestKind::SceneCaption, "a cooking demo")]);
        let (mem, out) = fx.run(&b, &[scene(vec![range(0, 1799)])]);
        let entry = out[0].as_ref().unwrap();
        assert_eq!(entry.output, ToolOutput::Caption { caption: "a cooking demo".into() });
        assert_eq!(mem.long_term.mosaics.len(), 5);
        assert_eq!(mem.long_term.intervals, vec![range(0, 1799)]);
        assert_eq!(mem.long_term.set_at_iteration, 1);
    }

    #[test]
    fn transcript_offsets_map_to_global_frames() {
        let fx = Fixture::new(SyntheticVideo::new(1800, 30.0));
        let segs = vec![TimedText { start_s: 1.0, end_s: 3.5, text: "hello".into() }];
        let b = backends(vec![ScriptEntry::transcription(1, segs, Usage::default())]);
        let (mem, out) = fx.run(&b, &[audio(vec![range(900, 1200)])]);
        assert_eq!(
            out[0].as_ref().unwrap().output,
            ToolOutput::Transcript { segments: vec![TranscriptLine { range: range(930, 1005), text: "hello".into() }] }
        );
        assert!(mem.short_term.is_empty());
    }

    #[test]
    fn offsets_cross_range_boundaries() {
        let h = VideoHandle::new("x", 1000, 10.0).unwrap();
        let ranges = [range(100, 109), range(500, 519)];
        assert_eq!(offset_to_frame(&ranges, &h, 0.0), 100);
        assert_eq!(offset_to_frame(&ranges, &h, 0.95), 500);
        assert_eq!(offset_to_frame(&ranges, &h, 1.5), 505);
        assert_eq!(offset_to_frame(&ranges, &h, 99.0), 519);
    }

    #[test]
    fn missing_audio_is_an_observation() {
        let fx = Fixture::new(SyntheticVideo::with_options(600, 30.0, 64, 48, SyntheticAudio::Absent));
        let (_, out) = fx.run(&backends(vec![]), &[audio(vec![range(0, 100)])]);
        let entry = out[0].as_ref().unwrap();
        assert_eq!(entry.output, ToolOutput::Transcript { segments: vec![] });
        assert!(entry.notices[0].contains("no audio track"));
    }

    #[test]
    fn clip_analyzer_leaves_long_term_pool_alone() {
        let fx = Fixture::new(SyntheticVideo::new(1800, 30.0));
        let b = backends(vec![text(1, RequestKind::ClipAnalysis, "Answer: the chef adds salt\nConfidence: 1.2")]);
        let before = init_memory(&fx.video, &fx.handle, 30).unwrap().long_term.sampled_indices();
        let (mem, out) = fx.run(&b, &[clip(range(300, 600))]);
        let entry = out[0].as_ref().unwrap();
        assert_eq!(entry.output, ToolOutput::Analysis { answer: "the chef adds salt".into(), confidence: 1.0 });
        assert!(entry.notices[0].contains("clamped"));
        assert_eq!(mem.long_term.sampled_indices(), before);
        assert_eq!(mem.long_term.set_at_iteration, 0);
    }

    #[test]
    fn unparseable_analysis_is_recoverable_and_leaves_no_result() {
        let fx = Fixture::new(SyntheticVideo::new(300, 30.0));
        let b = backends(vec![text(1, RequestKind::ClipAnalysis, "I cannot tell")]);
        let (mem, out) = fx.run(&b, &[clip(range(0, 100))]);
        let err = out[0].as_ref().unwrap_err();
        assert!(err.is_recoverable());
        assert!(mem.results.is_empty());
    }

    #[test]
    fn ranges_are_clamped_or_rejected() {
        let fx = Fixture::new(SyntheticVideo::new(300, 30.0));
        let b = backends(vec![text(1, RequestKind::SceneCaption, "x")]);
        let (_, out) = fx.run(&b, &[scene(vec![range(200, 400)]), scene(vec![range(400, 500)])]);
        let first = out[0].as_ref().unwrap();
        assert_eq!(first.intervals, vec![range(200, 299)]);
        assert!(first.notices[0].contains("clamped"));
        let err = out[1].as_ref().unwrap_err();
        assert!(err.is_recoverable());
        assert!(err.to_string().contains("outside the video"));
    }

    #[test]
    fn sequential_dispatch_bookkeeping() {
        let fx = Fixture::new(SyntheticVideo::new(1800, 30.0));
        let b = backends(vec![
            text(1, RequestKind::SceneCaption, "c"),
            ScriptEntry::transcription(2, vec![], Usage::default()),
            text(3, RequestKind::ClipAnalysis, "Answer: B\nConfidence: 0.5"),
        ]);
        let (mem, out) = fx.run(&b, &[scene(vec![range(0, 899)]), audio(vec![range(0, 100)]), clip(range(10, 20))]);
        assert!(out.iter().all(Result::is_ok));
        let iters: Vec<u32> = mem.results.iter().map(|r| r.iteration).collect();
        assert_eq!(iters, [1, 2, 3]);
    }

    #[test]
    fn backend_failures_are_fatal() {
        let fx = Fixture::new(SyntheticVideo::new(300, 30.0));
        let (_, out) = fx.run(&backends(vec![]), &[scene(vec![range(0, 10)])]);
        assert!(!out[0].as_ref().unwrap_err().is_recoverable());
    }

    #[test]
    fn names_round_trip() {
        for t in ToolName::ALL {
            assert_eq!(t.as_str().parse::<ToolName>().unwrap(), t);
            assert_eq!(serde_json::to_value(t).unwrap(), t.as_str());
        }
        assert!(NumFrames::try_from(45u64).is_err());
        assert_eq!(NumFrames::try_from(150u64).unwrap().get(), 150);
    }

    #[test]
    fn params_digest_is_stable() {
        let a = scene(vec![range(0, 10)]);
        assert_eq!(a.params_digest(), scene(vec![range(0, 10)]).params_digest());
        assert_ne!(a.params_digest(), scene(vec![range(0, 11)]).params_digest());
        assert!(a.canonical_json().contains("\"name\":\"scene_snapper\""));
    }
}
