//! Scoring planners against goal-carrying scenario suites, and query latency
//! benchmarks with injected network delay.

use std::io;
use std::path::Path;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::action::Dialect;
use crate::artifacts::{write_checked, Artifact};
use crate::chat::ChatMessages;
use crate::elicitation::{collect_dataset_until, ElicitConfig, Episode, EpisodeEnd};
use crate::emulator::{TerminalReason, WorldState};
use crate::goals::GoalSpec;
use crate::llm_client::{ChatBackend, Completion, HttpBackend, HttpConfig, LlmError, RequestContext};
use crate::masking::{initial_observation, mask_environment};
use crate::mock_server::{MockReply, MockServer, Responder};
use crate::plan_io::initial_messages;
use crate::scenario_gen::{procedural_generate, GenConfig, Scenario, Specification, TaskMode};
use crate::util::{mean, percentile, sample_std};

/// Final world state of an episode, rebuilt by replaying its executed
/// actions from the initial mask. `None` if the replay diverges.
pub fn final_state(ep: &Episode) -> Option<WorldState> {
    let mut state = WorldState::new(&ep.mask, usize::MAX);
    for a in ep.executed() {
        state = state.apply(a).ok()?.0;
    }
    if state.terminal.is_none() && ep.terminal == EpisodeEnd::Done {
        state.terminal = Some(TerminalReason::Done);
    }
    Some(state)
}

/// Whether a finished episode achieved `goal`. Timeouts and backend
/// failures never succeed.
pub fn check_goal(ep: &Episode, goal: &GoalSpec) -> bool {
    if matches!(ep.terminal, EpisodeEnd::Timeout | EpisodeEnd::Error) {
        return false;
    }
    let executed: Vec<_> = ep.executed().cloned().collect();
    final_state(ep).is_some_and(|s| goal.is_satisfied(&s, &executed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub episode_id: String,
    pub scenario_id: String,
    pub task_index: usize,
    pub dialect: Dialect,
    pub specification: Option<Specification>,
    pub mode: Option<TaskMode>,
    pub terminal: EpisodeEnd,
    pub valid: bool,
    pub success: bool,
    /// Why the episode failed, if it did.
    pub reason: Option<String>,
    pub turns: usize,
    pub latencies_ms: Vec<f64>,
}

impl EpisodeOutcome {
    pub fn from_episode(ep: &Episode) -> Self {
        let success = ep.goal.as_ref().is_some_and(|g| check_goal(ep, g));
        let reason = if success {
            None
        } else if let Some(e) = &ep.error {
            Some(format!("backend: {e}"))
        } else if ep.goal.is_none() {
            Some("task has no goal".to_string())
        } else if ep.terminal == EpisodeEnd::Timeout {
            Some("timeout".to_string())
        } else {
            Some("goal not met".to_string())
        };
        Self {
            episode_id: ep.id.clone(),
            scenario_id: ep.scenario_id.clone(),
            task_index: ep.task_index,
            dialect: ep.dialect,
            specification: ep.specification,
            mode: ep.mode,
            terminal: ep.terminal,
            valid: ep.valid,
            success,
            reason,
            turns: ep.turns.len(),
            latencies_ms: ep.turns.iter().map(|t| t.latency_ms).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub n: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    /// All fields are 0 for an empty sample.
    pub fn from_samples(ms: &[f64]) -> Self {
        if ms.is_empty() {
            return Self::default();
        }
        Self {
            n: ms.len(),
            mean_ms: mean(ms),
            std_ms: sample_std(ms),
            p50_ms: percentile(ms, 50.0),
            p95_ms: percentile(ms, 95.0),
            min_ms: ms.iter().copied().fold(f64::INFINITY, f64::min),
            max_ms: ms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownCell {
    pub specification: Option<Specification>,
    pub mode: Option<TaskMode>,
    pub n: usize,
    pub successes: usize,
    /// Absent for empty cells.
    pub success_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub backend: String,
    pub n_episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub timeouts: usize,
    pub invalid: usize,
    pub breakdown: Vec<BreakdownCell>,
    pub latency: LatencyStats,
    pub outcomes: Vec<EpisodeOutcome>,
}

fn rate(successes: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| successes as f64 / n as f64)
}

impl EvalReport {
    /// Aggregates per-episode rows. Every aggregate field is a function of
    /// `outcomes` alone.
    pub fn from_outcomes(backend: impl Into<String>, outcomes: Vec<EpisodeOutcome>) -> Self {
        let n = outcomes.len();
        let successes = outcomes.iter().filter(|o| o.success).count();
        let mut keys: Vec<(Option<Specification>, Option<TaskMode>)> = Vec::new();
        for s in [Specification::Fully, Specification::Under] {
            for m in [TaskMode::Mapping, TaskMode::Exploration] {
                keys.push((Some(s), Some(m)));
            }
        }
        for o in &outcomes {
            let k = (o.specification, o.mode);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys[4..].sort();
        let breakdown = keys
            .into_iter()
            .map(|(specification, mode)| {
                let cell: Vec<_> =
                    outcomes.iter().filter(|o| o.specification == specification && o.mode == mode).collect();
                let ok = cell.iter().filter(|o| o.success).count();
                BreakdownCell { specification, mode, n: cell.len(), successes: ok, success_rate: rate(ok, cell.len()) }
            })
            .collect();
        let samples: Vec<f64> = outcomes.iter().flat_map(|o| o.latencies_ms.iter().copied()).collect();
        Self {
            backend: backend.into(),
            n_episodes: n,
            successes,
            success_rate: rate(successes, n).unwrap_or(0.0),
            timeouts: outcomes.iter().filter(|o| o.terminal == EpisodeEnd::Timeout).count(),
            invalid: outcomes.iter().filter(|o| !o.valid).count(),
            breakdown,
            latency: LatencyStats::from_samples(&samples),
            outcomes,
        }
    }

    pub fn from_episodes(backend: impl Into<String>, episodes: &[Episode]) -> Self {
        Self::from_outcomes(backend, episodes.iter().map(EpisodeOutcome::from_episode).collect())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per episode.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "episode_id",
            "scenario_id",
            "task_index",
            "dialect",
            "specification",
            "mode",
            "terminal",
            "valid",
            "success",
            "turns",
            "mean_latency_ms",
            "reason",
        ])
        .expect("in-memory write");
        let label = |v: Option<String>| v.unwrap_or_default();
        for o in &self.outcomes {
            w.write_record([
                o.episode_id.clone(),
                o.scenario_id.clone(),
                o.task_index.to_string(),
                o.dialect.as_str().to_string(),
                label(o.specification.map(|s| serde_name(&s))),
                label(o.mode.map(|m| serde_name(&m))),
                serde_name(&o.terminal),
                o.valid.to_string(),
                o.success.to_string(),
                o.turns.to_string(),
                format!("{:.3}", if o.latencies_ms.is_empty() { 0.0 } else { mean(&o.latencies_ms) }),
                o.reason.clone().unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        write_checked(&dir.join(REPORT_JSON), Artifact::EvalReport, &self.to_json())?;
        write_checked(&dir.join(REPORT_CSV), Artifact::EvalOutcomeRow, &self.to_csv())
    }
}

/// Serde name of a unit enum variant.
fn serde_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

pub const REPORT_JSON: &str = "eval_report.json";
pub const REPORT_CSV: &str = "eval_outcomes.csv";

/// Runs every task of every scenario and scores it.
pub fn evaluate(client: &dyn ChatBackend, suite: &[Scenario], cfg: &ElicitConfig, base_seed: u64) -> EvalReport {
    evaluate_until(client, suite, cfg, base_seed, &AtomicBool::new(false))
}

/// Like [`evaluate`]; tasks not started before `cancel` is set are left out
/// of the report.
pub fn evaluate_until(
    client: &dyn ChatBackend,
    suite: &[Scenario],
    cfg: &ElicitConfig,
    base_seed: u64,
    cancel: &AtomicBool,
) -> EvalReport {
    let run = collect_dataset_until(client, suite, cfg, base_seed, cancel);
    EvalReport::from_episodes(client.describe(), &run.episodes)
}

/// Sleeps half the delay before and half after each inner call.
pub struct DelayShim<B> {
    pub inner: B,
    pub delay: Duration,
}

impl<B: ChatBackend> ChatBackend for DelayShim<B> {
    fn complete(&self, messages: &ChatMessages, ctx: &RequestContext) -> Result<Completion, LlmError> {
        let t = Instant::now();
        thread::sleep(self.delay / 2);
        let mut c = self.inner.complete(messages, ctx)?;
        thread::sleep(self.delay / 2);
        c.latency = t.elapsed();
        Ok(c)
    }

    fn describe(&self) -> String {
        format!("{} +{}ms", self.inner.describe(), self.delay.as_millis())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRun {
    pub condition: String,
    pub injected_delay_ms: u64,
    pub samples_ms: Vec<f64>,
    pub stats: LatencyStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub backend: String,
    pub runs: Vec<LatencyRun>,
}

impl BenchReport {
    /// Mean latency of the run with `delay` minus that of the zero-delay run.
    pub fn differential_ms(&self, delay_ms: u64) -> Option<f64> {
        let find = |d| self.runs.iter().find(|r| r.injected_delay_ms == d);
        Some(find(delay_ms)?.stats.mean_ms - find(0)?.stats.mean_ms)
    }

    /// Density data, columns `query_index,latency_ms,condition`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["query_index", "latency_ms", "condition"]).expect("in-memory write");
        for r in &self.runs {
            for (i, ms) in r.samples_ms.iter().enumerate() {
                w.write_record([i.to_string(), format!("{ms:.3}"), r.condition.clone()]).expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        write_checked(&dir.join(BENCH_JSON), Artifact::BenchReport, &self.to_json())?;
        write_checked(&dir.join(BENCH_CSV), Artifact::LatencyRow, &self.to_csv())
    }
}

pub const BENCH_JSON: &str = "latency.json";
pub const BENCH_CSV: &str = "latency.csv";

pub fn condition_label(delay_ms: u64) -> String {
    format!("delay_{delay_ms}ms")
}

/// The fixed planner query used for latency runs: the first turn of a small
/// procedural scene-graph task.
pub fn bench_query() -> ChatMessages {
    let cfg = GenConfig { env_size: 12, n_tasks: 1, ..GenConfig::default() };
    let sc = procedural_generate(&cfg, 0, 0);
    let mask = mask_environment(&sc.environment, 0.5, 0);
    initial_messages(Dialect::Spine, &sc.tasks[0].text, &initial_observation(&mask, Dialect::Spine))
}

/// Issues `n` identical queries one at a time and times each one.
pub fn bench_latency(
    client: &dyn ChatBackend,
    messages: &ChatMessages,
    n: usize,
    injected_delay_ms: u64,
) -> Result<LatencyRun, LlmError> {
    let ctx = RequestContext::default();
    let mut samples_ms = Vec::with_capacity(n);
    for _ in 0..n {
        let t = Instant::now();
        client.complete(messages, &ctx)?;
        samples_ms.push(t.elapsed().as_secs_f64() * 1000.0);
    }
    Ok(LatencyRun {
        condition: condition_label(injected_delay_ms),
        injected_delay_ms,
        stats: LatencyStats::from_samples(&samples_ms),
        samples_ms,
    })
}

/// Benchmarks an arbitrary backend, injecting delay with a client-side shim.
pub fn bench_backend<B: ChatBackend>(client: &B, n: usize, delays_ms: &[u64]) -> Result<BenchReport, LlmError> {
    let messages = bench_query();
    let mut runs = Vec::new();
    for &d in delays_ms {
        let shim = DelayShim { inner: client, delay: Duration::from_millis(d) };
        runs.push(bench_latency(&shim, &messages, n, d)?);
    }
    Ok(BenchReport { backend: client.describe(), runs })
}

/// Benchmarks the bundled mock server over real HTTP. The server sleeps
/// `service_ms` per request and injects each delay half on the request
/// path and half on the response path.
pub fn bench_mock(n: usize, delays_ms: &[u64], service_ms: u64) -> Result<BenchReport, LlmError> {
    let service = Duration::from_millis(service_ms);
    let responder: Responder = Arc::new(move |_req| {
        thread::sleep(service);
        MockReply::Text(r#"{"plan": "[answer(ready)]"}"#.to_string())
    });
    let server = MockServer::start(responder, Duration::ZERO)
        .map_err(|e| LlmError::Transport { attempts: 0, message: format!("mock server: {e}") })?;
    let client = HttpBackend::new(HttpConfig {
        base_url: server.base_url(),
        max_retries: 0,
        timeout_secs: 30.0,
        ..HttpConfig::default()
    })?;
    let messages = bench_query();
    bench_latency(&client, &messages, 1, 0)?;
    let mut runs = Vec::new();
    for &d in delays_ms {
        server.set_delay(Duration::from_millis(d));
        runs.push(bench_latency(&client, &messages, n, d)?);
    }
    Ok(BenchReport { backend: format!("mock({service_ms}ms) via {}", client.describe()), runs })
}
