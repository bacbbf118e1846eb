use std::path::{Path, PathBuf};

use assert_cmd::Command;
use predicates::prelude::*;
use serde_json::Value;

fn vidloop() -> Command {
    let mut cmd = Command::cargo_bin("vidloop").unwrap();
    cmd.env_remove("VIDLOOP_API_BASE").env_remove("VIDLOOP_API_KEY").env_remove("VIDLOOP_CONTROLLER_MODEL");
    cmd
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/ten_step.jsonl")
}

fn json_stdout(cmd: &mut Command) -> Value {
    let out = cmd.assert().success().get_output().stdout.clone();
    serde_json::from_slice(&out).unwrap()
}

fn run_fixture(trace: &Path) -> Command {
    let mut cmd = vidloop();
    cmd.args(["run", "--video", "synthetic:9000:30", "--question", "What is the cook making?"])
        .args(["--options", "soup", "bread", "stew", "salad", "--backend", "scripted"])
        .arg("--script")
        .arg(fixture())
        .arg("--trace")
        .arg(trace);
    cmd
}

#[test]
fn estimate_cost_text_and_json() {
    vidloop()
        .args(["estimate-cost", "--duration-s", "1800", "--fps-sampled", "2", "--tokens-per-frame", "1105"])
        .assert()
        .success()
        .stdout(predicate::str::contains("3978000").and(predicate::str::contains("1/50")));

    let v = json_stdout(vidloop().args([
        "estimate-cost",
        "--duration-s",
        "600",
        "--fps-sampled",
        "1",
        "--tokens-per-frame",
        "765",
        "--steps",
        "5",
        "--per-step",
        "6000",
        "--json",
    ]));
    assert_eq!(v["dense"]["total_tokens"], 459_000);
    assert_eq!(v["agent"]["total_tokens"], 30_000);
    assert_eq!(v["fraction"], "1/15");
}

#[test]
fn estimate_cost_rejects_bad_inputs() {
    vidloop()
        .args(["estimate-cost", "--duration-s", "0", "--fps-sampled", "2", "--tokens-per-frame", "1105"])
        .assert()
        .failure();
}

#[test]
fn scripted_run_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let v = json_stdout(&mut run_fixture(&trace));
    assert_eq!(v["letter"], "C");
    assert_eq!(v["forced"], true);
    assert_eq!(v["tokens"]["grand_total"], 79_400);

    let r = json_stdout(vidloop().arg("replay").arg("--trace").arg(&trace));
    assert_eq!(r["reproduced"], true);
    assert_eq!(r["letter"], "C");

    let text = std::fs::read_to_string(&trace).unwrap();
    std::fs::write(&trace, text.replacen("\"total_tokens\":79400", "\"total_tokens\":1", 1)).unwrap();
    vidloop().arg("replay").arg("--trace").arg(&trace).assert().failure().stderr(predicate::str::contains("diverged"));
}

#[test]
fn remote_run_needs_environment() {
    vidloop()
        .args(["run", "--video", "synthetic:60:30", "--question", "q", "--options", "a", "b", "c", "d"])
        .assert()
        .failure()
        .stderr(predicate::str::contains("VIDLOOP_"));
}

#[test]
fn run_requires_four_options() {
    vidloop()
        .args(["run", "--video", "synthetic:60:30", "--question", "q", "--options", "a", "b", "c"])
        .assert()
        .failure();
}

fn write_dataset(dir: &Path) -> PathBuf {
    let mut records = Vec::new();
    for (domain, n) in [("cooking", 6), ("sports", 4)] {
        for i in 0..n {
            records.push(serde_json::json!({
                "id": format!("{domain}-{i}"),
                "video_path": if i == 3 { "/missing/video.mp4".to_owned() } else { "synthetic:120:30".to_owned() },
                "question": "What happens?",
                "options": ["w", "x", "y", "z"],
                "gold": if i % 2 == 0 { "B" } else { "C" },
                "domain": domain,
                "task": if i < 2 { "count" } else { "recognize" },
                "duration_s": 4.0,
            }));
        }
    }
    let path = dir.join("dataset.json");
    std::fs::write(&path, serde_json::to_string(&records).unwrap()).unwrap();
    path
}

#[test]
fn sample_subset_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = write_dataset(dir.path());
    let plan = |seed: &str| {
        json_stdout(
            vidloop().arg("sample-subset").arg("--dataset").arg(&dataset).args(["--budget", "5", "--seed", seed]),
        )
    };
    let a = plan("3");
    assert_eq!(a["selected"].as_array().unwrap().len(), 5);
    assert_eq!(a["domain_targets"]["cooking"], 3);
    assert_eq!(a["domain_targets"]["sports"], 2);
    assert_eq!(a, plan("3"));

    vidloop()
        .arg("sample-subset")
        .arg("--dataset")
        .arg(&dataset)
        .args(["--budget", "11"])
        .assert()
        .failure()
        .stderr(predicate::str::contains("exceeds population"));
}

#[test]
fn scripted_bench_with_plan() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = write_dataset(dir.path());
    let scripts = dir.path().join("scripts");
    std::fs::create_dir(&scripts).unwrap();
    for id in ["cooking-0", "cooking-1", "cooking-2", "sports-0", "sports-1", "sports-2"] {
        std::fs::write(
            scripts.join(format!("{id}.jsonl")),
            "{\"step\":1,\"kind\":\"controller\",\"reply\":{\"text\":\"B\"}}\n",
        )
        .unwrap();
    }
    let plan = dir.path().join("plan.json");
    vidloop()
        .arg("sample-subset")
        .arg("--dataset")
        .arg(&dataset)
        .args(["--budget", "10", "--out"])
        .arg(&plan)
        .assert()
        .success();

    let traces = dir.path().join("traces");
    let report = dir.path().join("report.json");
    vidloop()
        .arg("bench")
        .arg("--dataset")
        .arg(&dataset)
        .arg("--subset-plan")
        .arg(&plan)
        .args(["--backend", "scripted", "--scripts-dir"])
        .arg(&scripts)
        .arg("--traces-dir")
        .arg(&traces)
        .arg("--out")
        .arg(&report)
        .assert()
        .success();

    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["total"], 10);
    // Gold is B for even indices; scripted runs always answer B.
    assert_eq!(r["overall"]["correct"], 4);
    assert_eq!(r["overall"]["scored"], 10);
    let missing = r["items"].as_array().unwrap().iter().filter(|i| i["status"] == "missing_video").count();
    assert_eq!(missing, 2);
    assert!(traces.join("cooking-0.jsonl").exists());
    assert!(!traces.join("cooking-3.jsonl").exists());
}
