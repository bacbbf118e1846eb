//! Random scripted transcripts shared by the property and acceptance suites.
#![allow(dead_code)]

use rand::Rng;
use serde_json::{json, Value};
use vidloop_core::backend::{
    Backends, ChatReply, RequestKind, ScriptEntry, ScriptedBackend, ScriptedTranscript, TimedText, Usage,
};
use vidloop_core::tools::RawToolCall;
use vidloop_core::{AgentConfig, Engine};

pub const OPTIONS: [&str; 4] = ["a red car", "a blue bike", "a green bus", "nothing"];

pub fn options() -> Vec<String> {
    OPTIONS.map(String::from).to_vec()
}

/// Replies that carry no option letter and must be rejected as answers.
const MUSINGS: [&str; 4] = ["Thinking further.", "Need more evidence first.", "Hmm, unsure.", "Let me look again."];

/// Replies that parse to the given letter.
pub fn answer_text(rng: &mut impl Rng, letter: char) -> String {
    match rng.random_range(0..5) {
        0 => letter.to_string(),
        1 => format!("Answer: {letter}"),
        2 => format!("The answer is ({}).", letter.to_ascii_lowercase()),
        3 => format!("**{letter}**"),
        _ => format!("I pick {letter}."),
    }
}

pub fn letter(rng: &mut impl Rng) -> char {
    ['A', 'B', 'C', 'D'][rng.random_range(0..4)]
}

fn range(rng: &mut impl Rng, total_frames: u64) -> Value {
    let start = rng.random_range(0..total_frames);
    let end = rng.random_range(start..total_frames);
    json!({"start_frame": start, "end_frame": end})
}

fn ranges(rng: &mut impl Rng, total_frames: u64) -> Value {
    let n = rng.random_range(1..=3);
    Value::Array((0..n).map(|_| range(rng, total_frames)).collect())
}

fn controller(step: u32, reply: ChatReply) -> ScriptEntry {
    ScriptEntry::reply(step, RequestKind::Controller, reply, Usage::new(4000, 120))
}

fn call(step: u32, name: &str, arguments: Value) -> ScriptEntry {
    controller(step, ChatReply::ToolCall(RawToolCall { name: name.into(), arguments }))
}

/// Entries for one controller step: a tool call plus whatever the tool
/// needs, an answer, a musing, or a malformed call.
fn step_entries(rng: &mut impl Rng, step: u32, total_frames: u64, may_answer: bool) -> Vec<ScriptEntry> {
    let roll = rng.random_range(0..100);
    match roll {
        0..=14 if may_answer => {
            let l = letter(rng);
            vec![controller(step, ChatReply::Text(answer_text(rng, l)))]
        }
        0..=29 => {
            let mut args = json!({"frame_ranges": ranges(rng, total_frames), "reason": "overview"});
            if rng.random_bool(0.5) {
                args["num_frames"] = json!([30, 60, 90, 150][rng.random_range(0..4)]);
            }
            vec![
                call(step, "scene_snapper", args),
                ScriptEntry::reply(
                    step,
                    RequestKind::SceneCaption,
                    ChatReply::Text("a street".into()),
                    Usage::new(2000, 40),
                ),
            ]
        }
        30..=49 => {
            let segs = (0..rng.random_range(0..4))
                .map(|i| TimedText { start_s: i as f64 * 0.5, end_s: i as f64 * 0.5 + 0.4, text: format!("line {i}") })
                .collect();
            vec![
                call(
                    step,
                    "audio_transcripter",
                    json!({"frame_ranges": ranges(rng, total_frames), "reason": "listen"}),
                ),
                ScriptEntry::transcription(step, segs, Usage::new(300, 20)),
            ]
        }
        50..=69 => {
            let analysis = if rng.random_bool(0.8) {
                format!("Answer: {}\nConfidence: {:.2}", OPTIONS[rng.random_range(0..4)], rng.random::<f64>())
            } else {
                "cannot tell".to_owned()
            };
            vec![
                call(
                    step,
                    "clip_analyzer",
                    json!({"frame_range": range(rng, total_frames), "question": "what moves?", "reason": "zoom"}),
                ),
                ScriptEntry::reply(step, RequestKind::ClipAnalysis, ChatReply::Text(analysis), Usage::new(2500, 30)),
            ]
        }
        70..=79 => {
            let text = MUSINGS[rng.random_range(0..MUSINGS.len())];
            vec![controller(step, ChatReply::Text(text.into()))]
        }
        _ => {
            let bad = match rng.random_range(0..4) {
                0 => call(
                    step,
                    "scene_snapper",
                    json!({"frame_ranges": ranges(rng, total_frames), "num_frames": 45, "reason": "r"}),
                ),
                1 => call(step, "scene_snapper", json!({"frame_ranges": ranges(rng, total_frames)})),
                2 => call(step, "interval_localizer", json!({"reason": "r"})),
                _ => call(
                    step,
                    "clip_analyzer",
                    json!({"frame_range": {"start_frame": total_frames + 5, "end_frame": total_frames + 50},
                           "question": "q", "reason": "r"}),
                ),
            };
            vec![bad]
        }
    }
}

/// A random transcript for a `step_budget`-step run. Entries keep coming
/// after an answer and past the forced-answer step, so a loop that overruns
/// finds replies instead of an exhausted script.
pub fn random_script(rng: &mut impl Rng, total_frames: u64, step_budget: u32, never_answer: bool) -> Vec<ScriptEntry> {
    let mut entries = Vec::new();
    for step in 1..=step_budget + 3 {
        entries.extend(step_entries(rng, step, total_frames, !never_answer));
    }
    let forced = letter(rng);
    entries.push(ScriptEntry::reply(
        step_budget + 1,
        RequestKind::ForcedAnswer,
        ChatReply::Text(answer_text(rng, forced)),
        Usage::new(4000, 5),
    ));
    entries
}

pub fn scripted_engine(entries: Vec<ScriptEntry>) -> Engine {
    let backend = ScriptedBackend::new(ScriptedTranscript::new(entries)).expect("valid script");
    Engine::new(AgentConfig::default(), Backends::scripted(backend)).expect("default config")
}
