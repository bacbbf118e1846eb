//! Versioned prompt and schema assets plus placeholder substitution.

use std::collections::BTreeMap;

use crate::digest::sha256_hex;
use crate::media::{FrameRange, VideoHandle};

pub const AGENT_SYSTEM: &str = include_str!("../../assets/prompts/agent_system.txt");
pub const AGENT_USER: &str = include_str!("../../assets/prompts/agent_user.txt");
pub const SCENE_CAPTION: &str = include_str!("../../assets/prompts/scene_caption.txt");
pub const CLIP_ANALYZER: &str = include_str!("../../assets/prompts/clip_analyzer.txt");
pub const FORCED_ANSWER_SUFFIX: &str = include_str!("../../assets/prompts/forced_answer.txt");
pub const TOOLS_LIST: &str = include_str!("../../assets/tools_list.json");

/// SHA-256 of every shipped asset, keyed by asset name.
pub fn asset_digests() -> BTreeMap<&'static str, String> {
    [
        ("agent_system", AGENT_SYSTEM),
        ("agent_user", AGENT_USER),
        ("scene_caption", SCENE_CAPTION),
        ("clip_analyzer", CLIP_ANALYZER),
        ("forced_answer", FORCED_ANSWER_SUFFIX),
        ("tools_list", TOOLS_LIST),
    ]
    .into_iter()
    .map(|(name, text)| (name, sha256_hex(text)))
    .collect()
}

/// Replaces `{name}` placeholders in one left-to-right pass, so substituted
/// values are never re-expanded. Unknown placeholders are left as-is.
pub fn fill(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        let hit = tail.find('}').and_then(|close| {
            let name = &tail[..close];
            vars.iter().find(|(n, _)| *n == name).map(|(_, v)| (v, close))
        });
        match hit {
            Some((value, close)) => {
                out.push_str(value);
                rest = &tail[close + 1..];
            }
            None => {
                out.push('{');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Options rendered one per line as `A. text`.
pub fn format_options(options: &[String]) -> String {
    options
        .iter()
        .enumerate()
        .map(|(i, opt)| format!("{}. {}", (b'A' + i as u8) as char, opt))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_agent_user(video: &VideoHandle, memory_json: &str, question: &str, options: &[String]) -> String {
    fill(
        AGENT_USER,
        &[
            ("total_frames", video.total_frames.to_string()),
            ("duration:.1f", format!("{:.1}", video.duration_s)),
            ("fps:.2f", format!("{:.2}", video.fps)),
            ("memory_json", memory_json.to_owned()),
            ("question_text", question.to_owned()),
            ("question_text_with_options", format_options(options)),
        ],
    )
}

/// Overall span of `ranges`, used for the `{start_frame}`/`{end_frame}` slots.
fn span(ranges: &[FrameRange]) -> (u64, u64) {
    let start = ranges.iter().map(|r| r.start_frame).min().unwrap_or(0);
    let end = ranges.iter().map(|r| r.end_frame).max().unwrap_or(0);
    (start, end)
}

pub fn render_scene_caption(frame_count: usize, ranges: &[FrameRange]) -> String {
    let (start, end) = span(ranges);
    fill(
        SCENE_CAPTION,
        &[
            ("len(frame_paths)", frame_count.to_string()),
            ("start_frame", start.to_string()),
            ("end_frame", end.to_string()),
        ],
    )
}

pub fn render_clip_analyzer(frame_count: usize, range: FrameRange, question: &str, options: &[String]) -> String {
    fill(
        CLIP_ANALYZER,
        &[
            ("len(frame_paths)", frame_count.to_string()),
            ("start_frame", range.start_frame.to_string()),
            ("end_frame", range.end_frame.to_string()),
            ("question_text", question.to_owned()),
            ("question_text_with_options", format_options(options)),
        ],
    )
}
