use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use vidloop_core::backend::{BackendError, Backends, RemoteConfig, Role, ScriptedBackend, ScriptedTranscript};
use vidloop_core::costmodel::{compare, estimate_arm, estimate_dvd, tally};
use vidloop_core::harness::{
    evaluate, load_dataset, replay, stratified_subset, EvalOptions, QARecord, SubsetPlan, TraceLog,
};
use vidloop_core::{AgentConfig, Engine};

#[derive(Parser)]
#[command(name = "vidloop", version, about = "Agentic question answering over long videos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    /// OpenAI-compatible HTTP endpoints configured through VIDLOOP_* variables.
    Remote,
    /// Replies read from a JSONL script.
    Scripted,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one multiple-choice question about one video.
    Run {
        /// Video path or `synthetic:<frames>:<fps>` locator.
        #[arg(long)]
        video: String,
        #[arg(long)]
        question: String,
        /// The four answer options, in A-D order.
        #[arg(long, num_args = 4, required = true)]
        options: Vec<String>,
        /// TOML config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write the JSONL trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "remote")]
        backend: BackendKind,
        /// Script for the scripted backend.
        #[arg(long, required_if_eq("backend", "scripted"))]
        script: Option<PathBuf>,
    },
    /// Compare the dense-sampling and agent-loop token estimates.
    EstimateCost {
        #[arg(long)]
        duration_s: f64,
        #[arg(long)]
        fps_sampled: f64,
        #[arg(long)]
        tokens_per_frame: u64,
        #[arg(long, default_value_t = 10)]
        steps: u64,
        #[arg(long, default_value_t = 8000)]
        per_step: u64,
        #[arg(long)]
        json: bool,
    },
    /// Draw a stratified evaluation subset from a dataset.
    SampleSubset {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        budget: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Plan output; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a dataset, optionally restricted to a subset plan.
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        subset_plan: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report output; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for one `<id>.jsonl` trace per record.
        #[arg(long)]
        traces_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "remote")]
        backend: BackendKind,
        /// Directory of `<id>.jsonl` scripts for the scripted backend.
        #[arg(long, required_if_eq("backend", "scripted"))]
        scripts_dir: Option<PathBuf>,
        /// Leave records with unreadable videos out of the accuracy.
        #[arg(long)]
        exclude_missing: bool,
    },
    /// Re-run a recorded trace and check it reproduces byte for byte.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<AgentConfig> {
    match path {
        Some(p) => AgentConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(AgentConfig::default()),
    }
}

fn remote_backends(config: &AgentConfig) -> Result<Backends, BackendError> {
    let m = &config.models;
    Backends::remote(
        RemoteConfig::from_env(Role::Controller, m.controller.as_deref())?,
        RemoteConfig::from_env(Role::Understanding, m.understanding.as_deref())?,
        RemoteConfig::from_env(Role::Transcription, m.transcription.as_deref())?,
        config.retry,
    )
}

fn scripted_backends(path: &Path, strict: bool) -> Result<Backends, BackendError> {
    let script = ScriptedTranscript::load(path)?;
    Ok(Backends::scripted(ScriptedBackend::new(script)?.strict(strict)))
}

fn write_json(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_run(
    video: &str,
    question: &str,
    options: &[String],
    config: Option<&Path>,
    trace_out: Option<&Path>,
    backend: BackendKind,
    script: Option<&Path>,
) -> Result<()> {
    let config = load_config(config)?;
    let backends = match (backend, script) {
        (BackendKind::Scripted, Some(p)) => scripted_backends(p, config.strict)?,
        (BackendKind::Scripted, None) => bail!("--script is required with --backend scripted"),
        (BackendKind::Remote, _) => remote_backends(&config)?,
    };
    let engine = Engine::new(config, backends)?;
    let result = engine.run(video, question, options);
    let trace = match &result {
        Ok(out) => &out.trace,
        Err(failure) => &failure.trace,
    };
    if let Some(p) = trace_out {
        trace.save(p).with_context(|| format!("writing trace {}", p.display()))?;
    }
    let out = result?;
    write_json(
        None,
        &json!({
            "letter": out.answer.letter.to_string(),
            "forced": out.answer.forced,
            "steps_used": out.answer.steps_used,
            "trace_id": out.answer.trace_id,
            "tokens": tally(&out.ledger),
        }),
    )
}

fn cmd_estimate(
    duration_s: f64,
    fps: f64,
    tokens_per_frame: u64,
    steps: u64,
    per_step: u64,
    as_json: bool,
) -> Result<()> {
    let dense = estimate_dvd(duration_s, fps, tokens_per_frame)?;
    let agent = estimate_arm(steps, per_step)?;
    let ratio = compare(&dense, &agent)?;
    if as_json {
        return write_json(
            None,
            &json!({"dense": dense, "agent": agent, "ratio": ratio, "fraction": ratio.fraction()}),
        );
    }
    println!("dense sampling: {} tokens", dense.total_tokens);
    println!("agent loop:     {} tokens (upper bound)", agent.total_tokens);
    println!("ratio:          {ratio}");
    Ok(())
}

fn cmd_sample(dataset: &Path, budget: u64, seed: u64, out: Option<&Path>) -> Result<()> {
    let records = load_dataset(dataset)?;
    let (plan, _) = stratified_subset(&records, budget, seed)?;
    write_json(out, &serde_json::to_value(&plan)?)
}

fn select(records: Vec<QARecord>, plan: &Path) -> Result<Vec<QARecord>> {
    let text = std::fs::read_to_string(plan).with_context(|| format!("reading {}", plan.display()))?;
    let plan: SubsetPlan = serde_json::from_str(&text).with_context(|| format!("parsing {}", plan.display()))?;
    let wanted: HashSet<&str> = plan.selected.iter().map(String::as_str).collect();
    let known: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    if let Some(missing) = wanted.iter().find(|id| !known.contains(*id)) {
        bail!("subset plan names unknown record `{missing}`");
    }
    Ok(records.into_iter().filter(|r| wanted.contains(r.id.as_str())).collect())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    dataset: &Path,
    plan: Option<&Path>,
    config: Option<&Path>,
    out: Option<&Path>,
    traces_dir: Option<&Path>,
    backend: BackendKind,
    scripts_dir: Option<&Path>,
    exclude_missing: bool,
) -> Result<()> {
    let config = load_config(config)?;
    let mut records = load_dataset(dataset)?;
    if let Some(plan) = plan {
        records = select(records, plan)?;
    }
    let strict = config.strict;
    let options = EvalOptions { exclude_missing };
    let outcome = match (backend, scripts_dir) {
        (BackendKind::Scripted, Some(dir)) => {
            evaluate(&records, &config, |r| scripted_backends(&dir.join(format!("{}.jsonl", r.id)), strict), &options)?
        }
        (BackendKind::Scripted, None) => bail!("--scripts-dir is required with --backend scripted"),
        (BackendKind::Remote, _) => evaluate(&records, &config, |_| remote_backends(&config), &options)?,
    };
    if let Some(dir) = traces_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (id, trace) in outcome.traces.iter().filter(|(_, t)| !t.records().is_empty()) {
            trace.save(&dir.join(format!("{id}.jsonl")))?;
        }
    }
    write_json(out, &serde_json::to_value(&outcome.report)?)
}

fn cmd_replay(path: &Path) -> Result<()> {
    let trace = TraceLog::load(path)?;
    let out = replay(&trace)?;
    write_json(
        None,
        &json!({
            "reproduced": true,
            "letter": out.answer.letter.to_string(),
            "forced": out.answer.forced,
            "records": out.trace.records().len(),
        }),
    )
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run { video, question, options, config, trace, backend, script } => {
            cmd_run(&video, &question, &options, config.as_deref(), trace.as_deref(), backend, script.as_deref())
        }
        Command::EstimateCost { duration_s, fps_sampled, tokens_per_frame, steps, per_step, json } => {
            cmd_estimate(duration_s, fps_sampled, tokens_per_frame, steps, per_step, json)
        }
        Command::SampleSubset { dataset, budget, seed, out } => cmd_sample(&dataset, budget, seed, out.as_deref()),
        Command::Bench { dataset, subset_plan, config, out, traces_dir, backend, scripts_dir, exclude_missing } => {
            cmd_bench(
                &dataset,
                subset_plan.as_deref(),
                config.as_deref(),
                out.as_deref(),
                traces_dir.as_deref(),
                backend,
                scripts_dir.as_deref(),
                exclude_missing,
            )
        }
        Command::Replay { trace } => cmd_replay(&trace),
    }
}
