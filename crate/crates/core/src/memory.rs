//! Three-tier memory: sensory pools (long-term mosaics, short-term clip
//! workspace), append-only tool results, and append-only reasoning traces.
//!
//! The controller keeps no chat history beyond this structure; every step's
//! prompt is rebuilt from [`HierMemory::render_snapshot`].

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::media::{
    compose_mosaics, extract_frames, sample_ranges, AudioSegment, FrameImage, FrameRange, MediaError, MediaSource,
    MosaicGrid, VideoHandle,
};
use crate::tools::{NumFrames, ToolName, ToolOutput};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("{0} not in allowed sampling set [30, 60, 90, 150]")]
    NotInSamplingSet(u32),
    #[error("mosaic member {index} lies outside the pool interval")]
    MosaicOutsideInterval { index: u64 },
    #[error("short-term pool already staged at iteration {0}")]
    AlreadyStaged(u32),
    #[error("iteration regression: {new} after {last}")]
    IterationRegression { last: u32, new: u32 },
    #[error(transparent)]
    Media(#[from] MediaError),
}

/// Snapshot of the current temporal focus as 256-px mosaics. Replaced
/// wholesale, never merged.
#[derive(Debug, Clone)]
pub struct LongTermPool {
    pub intervals: Vec<FrameRange>,
    pub mosaics: Vec<MosaicGrid>,
    pub set_at_iteration: u32,
}

impl LongTermPool {
    pub fn sampled_indices(&self) -> Vec<u64> {
        self.mosaics.iter().flat_map(|m| m.member_indices.iter().copied()).collect()
    }
}

/// Transient workspace for clip frames and audio. Empty between tool calls.
#[derive(Debug, Clone, Default)]
pub struct ShortTermPool {
    pub frames: Vec<FrameImage>,
    pub audio: Option<AudioSegment>,
    pub staged_at_iteration: Option<u32>,
}

impl ShortTermPool {
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty() && self.audio.is_none() && self.staged_at_iteration.is_none()
    }
}

/// One completed tool call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultEntry {
    pub iteration: u32,
    pub intervals: Vec<FrameRange>,
    pub tool: ToolName,
    pub output: ToolOutput,
    /// Clamping warnings, missing-audio notices and parse warnings.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notices: Vec<String>,
}

/// The controller's reasoning for one non-terminal iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: u32,
    pub reasoning: String,
    #[serde(rename = "action")]
    pub chosen_action: String,
    pub params_digest: String,
    /// Rejection or failure text shown back to the controller.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct HierMemory {
    pub long_term: LongTermPool,
    pub short_term: ShortTermPool,
    pub results: Vec<ResultEntry>,
    pub working: Vec<TraceEntry>,
}

/// Samples the whole video into the long-term pool; every other tier starts
/// empty.
pub fn init_memory(
    source: &dyn MediaSource,
    handle: &VideoHandle,
    initial_sample: u32,
) -> Result<HierMemory, MemoryError> {
    let count =
        NumFrames::try_from(initial_sample as u64).map_err(|_| MemoryError::NotInSamplingSet(initial_sample))?;
    let full = handle.full_range();
    let indices = sample_ranges(&[full], count.get() as u64)?;
    let frames = extract_frames(source, handle, &indices, 256)?;
    let mosaics = compose_mosaics(&frames)?;
    Ok(HierMemory {
        long_term: LongTermPool { intervals: vec![full], mosaics, set_at_iteration: 0 },
        short_term: ShortTermPool::default(),
        results: Vec::new(),
        working: Vec::new(),
    })
}

impl HierMemory {
    /// Installs a new long-term snapshot, discarding the previous one.
    pub fn set_long_term(
        &mut self,
        intervals: Vec<FrameRange>,
        mosaics: Vec<MosaicGrid>,
        iteration: u32,
    ) -> Result<(), MemoryError> {
        for index in mosaics.iter().flat_map(|m| m.member_indices.iter().copied()) {
            if !intervals.iter().any(|r| r.contains(index)) {
                return Err(MemoryError::MosaicOutsideInterval { index });
            }
        }
        self.long_term = LongTermPool { intervals, mosaics, set_at_iteration: iteration };
        Ok(())
    }

    pub fn stage_short_term(
        &mut self,
        frames: Vec<FrameImage>,
        audio: Option<AudioSegment>,
        iteration: u32,
    ) -> Result<(), MemoryError> {
        if let Some(at) = self.short_term.staged_at_iteration {
            return Err(MemoryError::AlreadyStaged(at));
        }
        self.short_term = ShortTermPool { frames, audio, staged_at_iteration: Some(iteration) };
        Ok(())
    }

    pub fn clear_short_term(&mut self) {
        self.short_term = ShortTermPool::default();
    }

    pub fn append_result(&mut self, entry: ResultEntry) -> Result<(), MemoryError> {
        if let Some(last) = self.results.last() {
            if entry.iteration < last.iteration {
                return Err(MemoryError::IterationRegression { last: last.iteration, new: entry.iteration });
            }
        }
        self.results.push(entry);
        Ok(())
    }

    pub fn append_trace(&mut self, entry: TraceEntry) -> Result<(), MemoryError> {
        if let Some(last) = self.working.last() {
            if entry.iteration < last.iteration {
                return Err(MemoryError::IterationRegression { last: last.iteration, new: entry.iteration });
            }
        }
        self.working.push(entry);
        Ok(())
    }

    fn snapshot_value(&self) -> Value {
        let results: Vec<Value> = self
            .results
            .iter()
            .map(|r| {
                let mut v = json!({
                    "iteration": r.iteration,
                    "intervals": r.intervals,
                    "tool": r.tool,
                    "output": r.output,
                });
                if !r.notices.is_empty() {
                    v["notices"] = json!(r.notices);
                }
                v
            })
            .collect();
        let working: Vec<Value> = self
            .working
            .iter()
            .map(|w| {
                let mut v = json!({
                    "iteration": w.iteration,
                    "reasoning": w.reasoning,
                    "action": w.chosen_action,
                });
                if let Some(err) = &w.error {
                    v["error"] = json!(err);
                }
                v
            })
            .collect();
        json!({
            "long_term": {
                "intervals": self.long_term.intervals,
                "sampled_indices": self.long_term.sampled_indices(),
                "set_at_iteration": self.long_term.set_at_iteration,
            },
            "results": results,
            "working": working,
        })
    }

    /// Compact JSON with sorted keys and no raster payloads. Equal memory
    /// states render to identical bytes.
    pub fn render_snapshot(&self) -> String {
        self.snapshot_value().to_string()
    }

    /// Everything in [`Self::render_snapshot`] plus pool bookkeeping and
    /// trace digests, for trace logs.
    pub fn dump(&self) -> Value {
        let mut v = self.snapshot_value();
        v["long_term"]["mosaics"] = json!(self
            .long_term
            .mosaics
            .iter()
            .map(|m| json!({"members": m.member_indices, "cell_size": [m.cell_size.0, m.cell_size.1]}))
            .collect::<Vec<_>>());
        v["short_term"] = json!({
            "frames": self.short_term.frames.iter().map(|f| f.global_index).collect::<Vec<_>>(),
            "audio_bytes": self.short_term.audio.as_ref().map(AudioSegment::byte_size),
        });
        v["working_digests"] = json!(self.working.iter().map(|w| w.params_digest.as_str()).collect::<Vec<_>>());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::SyntheticVideo;

    fn setup(frames: u64) -> (SyntheticVideo, VideoHandle) {
        let video = SyntheticVideo::new(frames, 30.0);
        let handle = video.probe().unwrap();
        (video, handle)
    }

    fn caption(iteration: u32, text: &str) -> ResultEntry {
        ResultEntry {
            iteration,
            intervals: vec![FrameRange::new(0, 10).unwrap()],
            tool: ToolName::SceneSnapper,
            output: ToolOutput::Caption { caption: text.into() },
            notices: vec![],
        }
    }

    fn trace(iteration: u32) -> TraceEntry {
        TraceEntry {
            iteration,
            reasoning: format!("step {iteration}"),
            chosen_action: "scene_snapper".into(),
            params_digest: "d".into(),
            error: None,
        }
    }

    #[test]
    fn init_covers_whole_video() {
        let (video, handle) = setup(1800);
        let mem = init_memory(&video, &handle, 30).unwrap();
        assert_eq!(mem.long_term.intervals, vec![FrameRange::new(0, 1799).unwrap()]);
        assert_eq!(mem.long_term.mosaics.len(), 5);
        assert!(mem.results.is_empty() && mem.working.is_empty() && mem.short_term.is_empty());
    }

    #[test]
    fn init_rejects_unlisted_sample_count() {
        let (video, handle) = setup(1800);
        let err = init_memory(&video, &handle, 45).unwrap_err();
        assert!(err.to_string().contains("not in allowed sampling set"));
    }

    #[test]
    fn init_on_short_video() {
        let (video, handle) = setup(5);
        let mem = init_memory(&video, &handle, 30).unwrap();
        assert_eq!(mem.long_term.mosaics.len(), 1);
        assert_eq!(mem.long_term.sampled_indices(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn long_term_replacement() {
        let (video, handle) = setup(1800);
        let mut mem = init_memory(&video, &handle, 30).unwrap();
        let narrow = FrameRange::new(600, 900).unwrap();
        let idx = sample_ranges(&[narrow], 30).unwrap();
        let mosaics = compose_mosaics(&extract_frames(&video, &handle, &idx, 256).unwrap()).unwrap();
        mem.set_long_term(vec![narrow], mosaics.clone(), 2).unwrap();
        assert_eq!(mem.long_term.intervals, vec![narrow]);
        assert_eq!(mem.long_term.sampled_indices(), idx);

        mem.set_long_term(vec![narrow], mosaics, 3).unwrap();
        assert_eq!(mem.long_term.sampled_indices(), idx);
        assert_eq!(mem.long_term.set_at_iteration, 3);

        let stray = compose_mosaics(&extract_frames(&video, &handle, &[700, 1799], 256).unwrap()).unwrap();
        let before = mem.render_snapshot();
        let err = mem.set_long_term(vec![narrow], stray, 4).unwrap_err();
        assert_eq!(err, MemoryError::MosaicOutsideInterval { index: 1799 });
        assert_eq!(mem.render_snapshot(), before);
    }

    #[test]
    fn short_term_lifecycle() {
        let (video, handle) = setup(1800);
        let mut mem = init_memory(&video, &handle, 30).unwrap();
        mem.clear_short_term();
        assert!(mem.short_term.is_empty());

        let frames = extract_frames(&video, &handle, &(0..12).collect::<Vec<_>>(), 512).unwrap();
        let audio = crate::media::extract_audio(&video, &handle, &[FrameRange::new(0, 11).unwrap()]).unwrap();
        mem.stage_short_term(frames.clone(), Some(audio), 1).unwrap();
        assert_eq!(mem.short_term.frames.len(), 12);
        assert!(mem.short_term.audio.is_some());
        assert_eq!(mem.stage_short_term(frames, None, 1).unwrap_err(), MemoryError::AlreadyStaged(1));

        let long_before = mem.long_term.sampled_indices();
        mem.clear_short_term();
        assert!(mem.short_term.is_empty());
        assert_eq!(mem.long_term.sampled_indices(), long_before);
    }

    #[test]
    fn append_only_with_regression_check() {
        let (video, handle) = setup(60);
        let mut mem = init_memory(&video, &handle, 30).unwrap();
        mem.append_result(caption(2, "a")).unwrap();
        mem.append_result(caption(3, "b")).unwrap();
        assert_eq!(mem.results.len(), 2);
        let err = mem.append_result(caption(1, "c")).unwrap_err();
        assert_eq!(err.to_string(), "iteration regression: 1 after 3");
        mem.append_trace(trace(3)).unwrap();
        assert!(mem.append_trace(trace(1)).is_err());
    }

    #[test]
    fn snapshot_contents() {
        let (video, handle) = setup(1800);
        let mut mem = init_memory(&video, &handle, 30).unwrap();
        let fresh: Value = serde_json::from_str(&mem.render_snapshot()).unwrap();
        assert_eq!(fresh["results"], json!([]));
        assert_eq!(fresh["working"], json!([]));
        assert_eq!(fresh["long_term"]["intervals"][0]["end_frame"], 1799);

        mem.append_result(caption(1, "a cooking demo")).unwrap();
        let after: Value = serde_json::from_str(&mem.render_snapshot()).unwrap();
        assert_eq!(after["results"][0]["tool"], "scene_snapper");
        assert_eq!(after["results"][0]["output"]["caption"], "a cooking demo");
    }

    #[test]
    fn snapshot_keys_are_sorted() {
        let (video, handle) = setup(100);
        let mut mem = init_memory(&video, &handle, 30).unwrap();
        mem.append_result(caption(1, "x")).unwrap();
        mem.append_trace(trace(1)).unwrap();
        let text = mem.render_snapshot();
        let lt = text.find("\"long_term\"").unwrap();
        let rs = text.find("\"results\"").unwrap();
        let wk = text.find("\"working\"").unwrap();
        assert!(lt < rs && rs < wk);
        assert!(text.find("\"intervals\"").unwrap() < text.find("\"sampled_indices\"").unwrap());
    }

    #[test]
    fn commuting_appends_render_identically() {
        let (video, handle) = setup(300);
        let base = init_memory(&video, &handle, 30).unwrap();
        let mut a = base.clone();
        a.append_result(caption(1, "x")).unwrap();
        a.append_trace(trace(1)).unwrap();
        let mut b = base;
        b.append_trace(trace(1)).unwrap();
        b.append_result(caption(1, "x")).unwrap();
        assert_eq!(a.render_snapshot(), b.render_snapshot());
    }
}
