//! Closed-loop plan elicitation: the planner sees a masked environment,
//! proposes actions, and receives emulated observations until it finishes
//! or runs out of turns.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{ActionCall, Dialect};
use crate::artifacts::{write_checked, Artifact};
use crate::chat::ChatMessage;
use crate::emulator::{DeltaKind, EmulatorError, ObservationDelta, TerminalReason, WorldState};
use crate::goals::GoalSpec;
use crate::llm_client::{entries_to_jsonl, ChatBackend, OracleHint, RecordingBackend, RequestContext};
use crate::masking::{initial_observation, mask_environment, MaskedEnvironment};
use crate::plan_io::{initial_messages, parse_response, ParseError, PlannerResponse};
use crate::scenario_gen::{Scenario, Specification, TaskMode};
use crate::util::derive_seed;

pub const PARSE_FAILURE_PREFIX: &str = "Your last message failed to parse: ";

/// When control returns to the planner within a multi-action plan.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanPolicy {
    /// After any delta that reveals, describes, or reports a failure.
    #[default]
    OnInformative,
    /// After every action.
    EveryAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElicitConfig {
    pub max_iterations: usize,
    /// Per-episode mask fraction is drawn uniformly from this range.
    pub mask_fraction_range: [f64; 2],
    pub ablate_masking: bool,
    pub ablate_validation: bool,
    pub parallelism: usize,
    pub replan: ReplanPolicy,
    /// Tabletop scenes have no way to uncover a hidden object, so they are
    /// shown whole unless this is set.
    pub mask_tabletop: bool,
}

impl Default for ElicitConfig {
    fn default() -> Self {
        Self {
            max_iterations: crate::emulator::DEFAULT_MAX_ITERATIONS,
            mask_fraction_range: [0.3, 0.8],
            ablate_masking: false,
            ablate_validation: false,
            parallelism: 4,
            replan: ReplanPolicy::OnInformative,
            mask_tabletop: false,
        }
    }
}

impl ElicitConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations < 1 {
            return Err("max_iterations must be at least 1".into());
        }
        if self.parallelism < 1 {
            return Err("parallelism must be at least 1".into());
        }
        let [lo, hi] = self.mask_fraction_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err("mask_fraction_range must be an ordered pair within [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeEnd {
    Answered,
    Done,
    Timeout,
    /// The backend failed; the episode was abandoned.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    /// What the planner saw before responding.
    pub observation: String,
    pub raw_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<PlannerResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<ParseError>,
    /// Actions the emulator accepted this turn.
    pub executed: Vec<ActionCall>,
    pub latency_ms: f64,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub scenario_id: String,
    pub task_index: usize,
    pub task: String,
    pub dialect: Dialect,
    pub system_prompt: String,
    pub mask: MaskedEnvironment,
    pub turns: Vec<Turn>,
    pub terminal: EpisodeEnd,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<GoalSpec>,
    /// Goal check result; absent when the task carries no goal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specification: Option<Specification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<TaskMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub transcript_path: String,
}

impl Episode {
    pub fn parse_error_turns(&self) -> usize {
        self.turns.iter().filter(|t| t.parse_error.is_some()).count()
    }

    pub fn executed(&self) -> impl Iterator<Item = &ActionCall> {
        self.turns.iter().flat_map(|t| t.executed.iter())
    }

    pub fn first_observation(&self) -> &str {
        self.turns.first().map(|t| t.observation.as_str()).unwrap_or("")
    }
}

pub fn episode_id(scenario_id: &str, task_index: usize) -> String {
    format!("{scenario_id}_{task_index}")
}

fn join_observations(dialect: Dialect, parts: &[String]) -> String {
    let sep = if dialect == Dialect::Spine { ",\n" } else { "\n" };
    parts.join(sep)
}

/// Runs one task of a scenario and returns the episode together with its
/// transcript lines.
pub fn run_episode(
    client: &dyn ChatBackend,
    scenario: &Scenario,
    task_index: usize,
    cfg: &ElicitConfig,
    base_seed: u64,
) -> (Episode, String) {
    let task = &scenario.tasks[task_index];
    let dialect = scenario.dialect;
    let id = episode_id(&scenario.id, task_index);
    let seed = derive_seed(base_seed, &format!("{}#{task_index}", scenario.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [lo, hi] = cfg.mask_fraction_range;
    let fraction = if cfg.ablate_masking || (dialect == Dialect::SayCan && !cfg.mask_tabletop) {
        0.0
    } else if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    };
    let mask = mask_environment(&scenario.environment, fraction, seed);
    let mut state = WorldState::new(&mask, cfg.max_iterations);
    let mut observation = initial_observation(&mask, dialect);
    let mut messages = initial_messages(dialect, &task.text, &observation);
    let ctx = RequestContext {
        episode_id: id.clone(),
        hint: task.goal.clone().map(|goal| OracleHint {
            full: Arc::clone(&state.full),
            goal,
            max_iterations: cfg.max_iterations,
        }),
    };
    let recorder = RecordingBackend::new(client);
    let mut turns = Vec::new();
    let mut error = None;

    while !state.is_terminal() {
        if state.budget_exhausted() {
            state.time_out();
            break;
        }
        state.step_count += 1;
        let completion = match recorder.complete(&messages, &ctx) {
            Ok(c) => c,
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        };
        messages.push(ChatMessage::assistant(completion.text.clone()));
        let mut turn = Turn {
            observation: std::mem::take(&mut observation),
            raw_response: completion.text.clone(),
            response: None,
            parse_error: None,
            executed: Vec::new(),
            latency_ms: completion.latency.as_secs_f64() * 1000.0,
            attempts: completion.attempts,
        };
        let mut outputs: Vec<String> = Vec::new();
        match parse_response(dialect, &completion.text) {
            Err(e) => {
                outputs.push(format!("{PARSE_FAILURE_PREFIX}{e}"));
                turn.parse_error = Some(e);
            }
            Ok(resp) => {
                let mut ran_to_end = true;
                for action in &resp.plan {
                    let (next, delta) = match state.apply(action) {
                        Ok(x) => x,
                        Err(EmulatorError::AlreadyTerminal) => break,
                        Err(e @ EmulatorError::Malformed { .. }) => {
                            outputs.push(ObservationDelta::feedback(e.to_string()).rendered);
                            ran_to_end = false;
                            break;
                        }
                    };
                    state = next;
                    if delta.kind != DeltaKind::Feedback {
                        turn.executed.push(action.clone());
                    }
                    if delta.kind == DeltaKind::Terminal {
                        break;
                    }
                    outputs.push(delta.rendered.clone());
                    let stop = delta.kind == DeltaKind::Feedback
                        || cfg.replan == ReplanPolicy::EveryAction
                        || delta.kind.is_informative();
                    if stop {
                        ran_to_end = false;
                        break;
                    }
                }
                // A household plan that runs to completion without a
                // failure or a new sighting is the planner's final answer.
                if dialect == Dialect::LlmPlanner && ran_to_end && !state.is_terminal() {
                    state.terminal = Some(TerminalReason::Done);
                }
                turn.response = Some(resp);
            }
        }
        turns.push(turn);
        if state.is_terminal() {
            break;
        }
        observation = join_observations(dialect, &outputs);
        messages.push(ChatMessage::user(observation.clone()));
    }

    let terminal = match (&error, &state.terminal) {
        (Some(_), _) => EpisodeEnd::Error,
        (None, Some(TerminalReason::Answered { .. })) => EpisodeEnd::Answered,
        (None, Some(TerminalReason::Done)) => EpisodeEnd::Done,
        (None, _) => EpisodeEnd::Timeout,
    };
    let answer = match &state.terminal {
        Some(TerminalReason::Answered { message }) => Some(message.clone()),
        _ => None,
    };
    let executed: Vec<ActionCall> = turns.iter().flat_map(|t: &Turn| t.executed.iter().cloned()).collect();
    let success = task.goal.as_ref().map(|g| error.is_none() && g.is_satisfied(&state, &executed));
    let completed = matches!(terminal, EpisodeEnd::Answered | EpisodeEnd::Done);
    let episode = Episode {
        transcript_path: format!("{id}.jsonl"),
        id: id.clone(),
        scenario_id: scenario.id.clone(),
        task_index,
        task: task.text.clone(),
        dialect,
        system_prompt: messages.system_text().to_string(),
        mask,
        turns,
        terminal,
        answer,
        valid: error.is_none() && (completed || cfg.ablate_validation),
        goal: task.goal.clone(),
        success,
        specification: task.specification,
        mode: task.mode,
        error,
    };
    (episode, entries_to_jsonl(&recorder.episode_entries(&id)))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeError {
    pub episode: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitSummary {
    pub total: usize,
    pub valid: usize,
    pub timeout: usize,
    pub answered: usize,
    pub done: usize,
    pub parse_error_turns: usize,
    pub errors: Vec<EpisodeError>,
    /// Tasks never started because the run was cancelled.
    #[serde(default)]
    pub skipped: usize,
}

impl ElicitSummary {
    pub fn from_episodes(episodes: &[Episode]) -> Self {
        let count = |end: EpisodeEnd| episodes.iter().filter(|e| e.terminal == end).count();
        Self {
            total: episodes.len(),
            valid: episodes.iter().filter(|e| e.valid).count(),
            timeout: count(EpisodeEnd::Timeout),
            answered: count(EpisodeEnd::Answered),
            done: count(EpisodeEnd::Done),
            parse_error_turns: episodes.iter().map(Episode::parse_error_turns).sum(),
            errors: episodes
                .iter()
                .filter_map(|e| Some(EpisodeError { episode: e.id.clone(), message: e.error.clone()? }))
                .collect(),
            skipped: 0,
        }
    }
}

pub struct Collected {
    pub episodes: Vec<Episode>,
    pub transcripts: Vec<String>,
    pub summary: ElicitSummary,
}

/// Runs every task of every scenario on a bounded worker pool. Results come
/// back in scenario/task order regardless of scheduling.
pub fn collect_dataset(
    client: &dyn ChatBackend,
    scenarios: &[Scenario],
    cfg: &ElicitConfig,
    base_seed: u64,
) -> Collected {
    collect_dataset_until(client, scenarios, cfg, base_seed, &AtomicBool::new(false))
}

/// Like [`collect_dataset`], but tasks not yet started when `cancel` is set
/// are skipped. Episodes in flight run to completion.
pub fn collect_dataset_until(
    client: &dyn ChatBackend,
    scenarios: &[Scenario],
    cfg: &ElicitConfig,
    base_seed: u64,
    cancel: &AtomicBool,
) -> Collected {
    let jobs: Vec<(&Scenario, usize)> =
        scenarios.iter().flat_map(|s| (0..s.tasks.len()).map(move |i| (s, i))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.parallelism.max(1)).build().expect("worker pool");
    let results: Vec<Option<(Episode, String)>> = pool.install(|| {
        jobs.par_iter()
            .map(|(s, i)| (!cancel.load(Ordering::SeqCst)).then(|| run_episode(client, s, *i, cfg, base_seed)))
            .collect()
    });
    let skipped = results.iter().filter(|r| r.is_none()).count();
    let (episodes, transcripts): (Vec<_>, Vec<_>) = results.into_iter().flatten().unzip();
    let summary = ElicitSummary { skipped, ..ElicitSummary::from_episodes(&episodes) };
    Collected { episodes, transcripts, summary }
}

pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

/// Writes `<dir>/<episode>.jsonl` transcripts, `episodes.jsonl`, and
/// `summary.json`.
pub fn write_run(dir: &Path, run: &Collected) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut all = String::new();
    for (e, t) in run.episodes.iter().zip(&run.transcripts) {
        write_checked(&dir.join(&e.transcript_path), Artifact::TranscriptEntry, t)?;
        all.push_str(&serde_json::to_string(e).map_err(io::Error::other)?);
        all.push('\n');
    }
    write_checked(&dir.join(EPISODES_FILE), Artifact::Episode, &all)?;
    let summary = serde_json::to_string_pretty(&run.summary).map_err(io::Error::other)? + "\n";
    write_checked(&dir.join(SUMMARY_FILE), Artifact::ElicitSummary, &summary)?;
    Ok(dir.to_path_buf())
}

pub fn read_episodes(path: &Path) -> io::Result<Vec<Episode>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// Concatenated transcripts of a run directory, suitable for replay.
pub fn read_transcripts(dir: &Path) -> io::Result<String> {
    let mut out = String::new();
    for e in read_episodes(&dir.join(EPISODES_FILE))? {
        out.push_str(&fs::read_to_string(dir.join(&e.transcript_path))?);
    }
    Ok(out)
}
