mod common;

use vidloop_core::backend::ScriptedTranscript;
use vidloop_core::harness::{replay, ReplayError, TraceLog, TraceRecord};
use vidloop_core::tools::ToolSet;

const LOCATOR: &str = "synthetic:9000:30";

fn fixture_run() -> TraceLog {
    let script = ScriptedTranscript::parse_jsonl(include_str!("fixtures/ten_step.jsonl")).unwrap();
    let engine = common::scripted_engine(script.entries);
    engine.run(LOCATOR, "What is the cook making?", &common::options()).unwrap().trace
}

#[test]
fn shipped_schema_matches_golden_bytes() {
    assert_eq!(ToolSet::shipped().render(), include_str!("golden/tools_list.json"));
}

#[test]
fn saved_trace_replays_from_disk() {
    let trace = fixture_run();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.jsonl");
    trace.save(&path).unwrap();
    let loaded = TraceLog::load(&path).unwrap();
    assert_eq!(loaded.to_jsonl(), trace.to_jsonl());
    let out = replay(&loaded).unwrap();
    assert_eq!(out.answer.letter, 'C');
    assert!(out.answer.forced);
    assert_eq!(out.trace.to_jsonl(), trace.to_jsonl());
}

#[test]
fn truncated_trace_is_refused() {
    let text = fixture_run().to_jsonl();
    let lines: Vec<&str> = text.lines().collect();
    let cut = TraceLog::parse_jsonl(&lines[..lines.len() - 1].join("\n")).unwrap();
    assert!(matches!(replay(&cut), Err(ReplayError::Truncated)));
}

#[test]
fn edited_reply_is_detected() {
    let text = fixture_run().to_jsonl();
    let edited = text.replacen("A cook chops onions at a counter.", "A cook stirs soup.", 1);
    assert_ne!(edited, text);
    let trace = TraceLog::parse_jsonl(&edited).unwrap();
    assert!(replay(&trace).is_err());
}

#[test]
fn edited_totals_diverge_on_the_final_line() {
    let text = fixture_run().to_jsonl();
    let edited = text.replacen("\"total_tokens\":79400", "\"total_tokens\":79401", 1);
    assert_ne!(edited, text);
    let trace = TraceLog::parse_jsonl(&edited).unwrap();
    let last = trace.records().len();
    assert!(matches!(replay(&trace), Err(ReplayError::Diverged { line }) if line == last));
}

#[test]
fn edited_header_breaks_request_digests() {
    let text = fixture_run().to_jsonl();
    let edited = text.replacen("What is the cook making?", "What is the cook holding?", 1);
    let trace = TraceLog::parse_jsonl(&edited).unwrap();
    assert!(replay(&trace).is_err());
}

#[test]
fn trace_ids_are_stable_and_recorded() {
    let a = fixture_run();
    let b = fixture_run();
    assert_eq!(a.id(), b.id());
    let id = a.id().unwrap();
    assert_eq!(a.final_record().unwrap().trace_id, id);
    let steps = a.records().iter().filter(|r| matches!(r, TraceRecord::Step(_))).count();
    assert_eq!(steps, 10);
}
