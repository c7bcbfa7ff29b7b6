//! One function per pipeline stage. Each reads its inputs from and writes its
//! outputs under `output_root`, so stages can be rerun independently.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use plansynth_core::artifacts::{check_value, write_checked, Artifact};
use plansynth_core::dataset_out::{export, records_to_jsonl, verify_dataset_text, write_export, DatasetSummary};
use plansynth_core::elicitation::{
    collect_dataset_until, read_episodes, write_run, ElicitSummary, EpisodeEnd, EPISODES_FILE,
};
use plansynth_core::eval::{bench_backend, bench_mock, evaluate_until, BenchReport, EvalReport};
use plansynth_core::llm_client::RecordingBackend;
use plansynth_core::scenario_gen::{generate_scenario, procedural_generate, Scenario};
use plansynth_core::Dialect;
use serde::{Deserialize, Serialize};

use crate::backends::{self, Generator};
use crate::config::{BenchTarget, RunConfig, CONFIG_COPY};
use crate::CliError;

pub const GENERATION_SUMMARY: &str = "generation_summary.json";
pub const GENERATION_TRANSCRIPTS: &str = "generation_transcripts.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenFailure {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub generator: String,
    pub dialect: Dialect,
    pub base_seed: u64,
    pub requested: usize,
    pub generated: usize,
    pub failures: Vec<GenFailure>,
    /// Indices never attempted because the run was interrupted.
    pub skipped: usize,
}

fn io_err<'a>(stage: &'static str, path: &'a Path) -> impl Fn(io::Error) -> CliError + 'a {
    move |e| CliError::stage(stage, format!("{}: {e}", path.display()))
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializes") + "\n"
}

pub fn write_config_copy(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let path = cfg.output_root.join(CONFIG_COPY);
    fs::create_dir_all(&cfg.output_root).map_err(io_err("setup", &cfg.output_root))?;
    let value = serde_json::to_value(cfg).expect("config serializes");
    check_value(Artifact::RunConfig, &value).map_err(|e| CliError::stage("setup", e.to_string()))?;
    fs::write(&path, cfg.to_toml()).map_err(io_err("setup", &path))?;
    Ok(path)
}

fn clear_scenarios(dir: &Path) -> io::Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let stale = (name.starts_with("scenario_") && name.ends_with(".json"))
            || name == GENERATION_SUMMARY
            || name == GENERATION_TRANSCRIPTS;
        if stale {
            fs::remove_file(&path)?;
        }
    }
    Ok(())
}

pub fn generate(cfg: &RunConfig, cancel: &AtomicBool) -> Result<GenerationSummary, CliError> {
    let generator = backends::generator(&cfg.generator, cfg.dialect)?;
    let dir = cfg.scenarios_dir();
    clear_scenarios(&dir).and_then(|_| fs::create_dir_all(&dir)).map_err(io_err("generate", &dir))?;

    let recorder = match generator {
        Generator::Chat(b) => Some(RecordingBackend::new(b)),
        Generator::Procedural => None,
    };
    let mut summary = GenerationSummary {
        generator: cfg.generator.name().to_string(),
        dialect: cfg.dialect,
        base_seed: cfg.base_seed,
        requested: cfg.n_scenarios,
        generated: 0,
        failures: Vec::new(),
        skipped: 0,
    };
    for index in 0..cfg.n_scenarios {
        if cancel.load(Ordering::SeqCst) {
            summary.skipped = cfg.n_scenarios - index;
            break;
        }
        let result = match &recorder {
            None => Ok(procedural_generate(&cfg.generation, cfg.base_seed, index)),
            Some(r) => generate_scenario(r, &cfg.generation, cfg.base_seed, index),
        };
        match result {
            Ok(s) => {
                let path = dir.join(s.file_name());
                write_checked(&path, Artifact::Scenario, &s.to_json()).map_err(io_err("generate", &path))?;
                summary.generated += 1;
            }
            Err(e) => {
                eprintln!("generate: scenario {index} failed: {e}");
                summary.failures.push(GenFailure { index, error: e.to_string() });
            }
        }
    }
    if let Some(r) = &recorder {
        let path = dir.join(GENERATION_TRANSCRIPTS);
        write_checked(&path, Artifact::TranscriptEntry, &r.to_jsonl()).map_err(io_err("generate", &path))?;
    }
    let path = dir.join(GENERATION_SUMMARY);
    write_checked(&path, Artifact::GenerationSummary, &pretty(&summary)).map_err(io_err("generate", &path))?;
    if summary.generated == 0 {
        let why = summary.failures.first().map(|f| f.error.clone()).unwrap_or_else(|| "interrupted".into());
        return Err(CliError::stage("generate", format!("no scenario was generated; {why}")));
    }
    println!("generate: {}/{} scenarios -> {}", summary.generated, summary.requested, dir.display());
    Ok(summary)
}

/// Digit runs compare by value, so `scenario_0_10` sorts after `scenario_0_9`.
fn natural_key(s: &str) -> Vec<(String, u128)> {
    let mut out = Vec::new();
    let mut text = String::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if c.is_ascii_digit() {
            let mut digits = c.to_string();
            while let Some(d) = chars.next_if(char::is_ascii_digit) {
                digits.push(d);
            }
            out.push((std::mem::take(&mut text), digits.parse().unwrap_or(u128::MAX)));
        } else {
            text.push(c);
        }
    }
    out.push((text, 0));
    out
}

/// Every `scenario_*.json` in `dir`, in natural file-name order.
pub fn load_scenarios(dir: &Path, stage: &'static str) -> Result<Vec<Scenario>, CliError> {
    let entries = fs::read_dir(dir).map_err(io_err(stage, dir))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("scenario_") && name.ends_with(".json")
        })
        .collect();
    paths.sort_by_cached_key(|p| natural_key(&p.file_name().unwrap().to_string_lossy()));
    if paths.is_empty() {
        return Err(CliError::stage(stage, format!("no scenario_*.json files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io_err(stage, p))?;
            serde_json::from_str(&text).map_err(|e| CliError::stage(stage, format!("{}: {e}", p.display())))
        })
        .collect()
}

pub fn elicit(cfg: &RunConfig, cancel: &AtomicBool) -> Result<ElicitSummary, CliError> {
    let planner = backends::planner(&cfg.planner, cfg.dialect)?;
    let scenarios = load_scenarios(&cfg.scenarios_dir(), "elicit")?;
    if let Some(s) = scenarios.iter().find(|s| s.dialect != cfg.dialect) {
        return Err(CliError::stage(
            "elicit",
            format!("{} is a {} scenario but the run is {}", s.id, s.dialect, cfg.dialect),
        ));
    }
    let run = collect_dataset_until(&planner, &scenarios, &cfg.elicitation, cfg.base_seed, cancel);
    let dir = cfg.episodes_dir();
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(io_err("elicit", &dir))?;
    }
    write_run(&dir, &run).map_err(io_err("elicit", &dir))?;
    let s = run.summary;
    if s.total == 0 {
        return Err(CliError::stage("elicit", "no episode was run"));
    }
    if s.errors.len() == s.total {
        return Err(CliError::stage("elicit", format!("every episode failed; first: {}", s.errors[0].message)));
    }
    println!(
        "elicit: {} episodes, {} valid, {} timeout, {} errors -> {}",
        s.total,
        s.valid,
        s.timeout,
        s.errors.len(),
        dir.display()
    );
    Ok(s)
}

pub fn export_dataset(cfg: &RunConfig) -> Result<DatasetSummary, CliError> {
    let path = cfg.episodes_dir().join(EPISODES_FILE);
    let episodes = read_episodes(&path).map_err(io_err("export", &path))?;
    let ex = export(&episodes, &cfg.export).map_err(|e| CliError::stage("export", e.to_string()))?;
    for (name, records) in [("train", &ex.train), ("val", &ex.val)] {
        if let Some(v) = verify_dataset_text(&records_to_jsonl(records)).first() {
            return Err(CliError::stage("export", format!("{name} split failed verification: {v}")));
        }
    }
    let dir = cfg.dataset_dir();
    write_export(&dir, &ex).map_err(io_err("export", &dir))?;
    let s = ex.summary;
    println!(
        "export: {} records ({} train, {} val), {} excluded -> {}",
        s.n_records,
        s.train,
        s.val,
        s.excluded.total(),
        dir.display()
    );
    Ok(s)
}

pub fn eval(cfg: &RunConfig, cancel: &AtomicBool) -> Result<EvalReport, CliError> {
    let planner = backends::planner(&cfg.planner, cfg.dialect)?;
    let suite = load_scenarios(&cfg.suite_dir(), "eval")?;
    let report = evaluate_until(&planner, &suite, &cfg.elicitation, cfg.base_seed, cancel);
    if report.n_episodes > 0 && report.outcomes.iter().all(|o| o.terminal == EpisodeEnd::Error) {
        return Err(CliError::stage(
            "eval",
            format!("every episode failed; first: {}", report.outcomes[0].reason.as_deref().unwrap_or("")),
        ));
    }
    let dir = cfg.eval_dir();
    report.write(&dir).map_err(io_err("eval", &dir))?;
    println!(
        "eval: {}/{} succeeded ({:.3}), {} timeouts -> {}",
        report.successes,
        report.n_episodes,
        report.success_rate,
        report.timeouts,
        dir.display()
    );
    Ok(report)
}

pub fn bench(cfg: &RunConfig) -> Result<BenchReport, CliError> {
    let b = &cfg.bench;
    let report = match b.target {
        BenchTarget::Mock => bench_mock(b.n_queries, &b.delays_ms, b.service_ms),
        BenchTarget::Planner => {
            bench_backend(&backends::planner(&cfg.planner, cfg.dialect)?, b.n_queries, &b.delays_ms)
        }
    }
    .map_err(|e| CliError::stage("bench", e.to_string()))?;
    let dir = cfg.bench_dir();
    report.write(&dir).map_err(io_err("bench", &dir))?;
    for r in &report.runs {
        println!("bench: {} mean {:.1} ms, p95 {:.1} ms", r.condition, r.stats.mean_ms, r.stats.p95_ms);
    }
    Ok(report)
}

/// What a command would do, one line per step.
pub fn plan(cfg: &RunConfig, stages: &[&str]) -> Vec<String> {
    let mut out = vec![format!("config copy -> {}", cfg.output_root.join(CONFIG_COPY).display())];
    for stage in stages {
        out.push(match *stage {
            "generate" => format!(
                "generate {} {} scenarios (seed {}, env_size {}, {} tasks each) with {} -> {}",
                cfg.n_scenarios,
                cfg.dialect,
                cfg.base_seed,
                cfg.generation.env_size,
                cfg.generation.n_tasks,
                cfg.generator.name(),
                cfg.scenarios_dir().display()
            ),
            "elicit" => format!(
                "elicit with {} (max {} iterations, masking {}, validation {}) -> {}",
                cfg.planner.name(),
                cfg.elicitation.max_iterations,
                on_off(!cfg.elicitation.ablate_masking),
                on_off(!cfg.elicitation.ablate_validation),
                cfg.episodes_dir().display()
            ),
            "export" => format!(
                "export {} (train ratio {}) -> {}",
                cfg.episodes_dir().join(EPISODES_FILE).display(),
                cfg.export.train_ratio,
                cfg.dataset_dir().display()
            ),
            "eval" => {
                format!("eval {} on {} -> {}", cfg.planner.name(), cfg.suite_dir().display(), cfg.eval_dir().display())
            }
            "bench" => format!(
                "bench {:?} target, {} queries per delay {:?} -> {}",
                cfg.bench.target,
                cfg.bench.n_queries,
                cfg.bench.delays_ms,
                cfg.bench_dir().display()
            ),
            other => other.to_string(),
        });
    }
    out
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}
