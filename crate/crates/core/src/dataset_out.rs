//! Export of collected episodes as loss-masked chat records.
//!
//! One JSON object per line. User turns carry observations and are never
//! trained on; assistant turns carry the canonical rendering of the parsed
//! plan so every target parses back to the same actions.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::Dialect;
use crate::artifacts::{write_checked, Artifact};
use crate::chat::Role;
use crate::elicitation::{Episode, EpisodeEnd};
use crate::plan_io::{parse_response, render_response};
use crate::util::{mean, percentile};

pub const TRAIN_FILE: &str = "train.jsonl";
pub const VAL_FILE: &str = "val.jsonl";
pub const DATASET_SUMMARY_FILE: &str = "dataset_summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordTurn {
    pub role: Role,
    pub content: String,
    pub loss: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub scenario_id: String,
    pub task: String,
    pub n_actions: usize,
    pub terminal: EpisodeEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub dialect: Dialect,
    pub system: String,
    pub turns: Vec<RecordTurn>,
    pub meta: RecordMeta,
}

impl DatasetRecord {
    /// Assistant targets in order.
    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.turns.iter().filter(|t| t.loss).map(|t| t.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    /// Fraction of records that go to the training split.
    pub train_ratio: f64,
    pub seed: u64,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self { train_ratio: 0.9, seed: 0 }
    }
}

impl ExportConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.train_ratio) {
            return Err(format!("train_ratio must be within [0, 1], got {}", self.train_ratio));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("no valid episodes to export ({excluded} excluded)")]
    EmptyDataset { excluded: usize },
    #[error("episode {episode}: {message}")]
    Episode { episode: String, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub invalid: usize,
    pub parse_errors: usize,
    pub errored: usize,
}

impl Excluded {
    pub fn total(&self) -> usize {
        self.invalid + self.parse_errors + self.errored
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_records: usize,
    pub n_turns: usize,
    pub train: usize,
    pub val: usize,
    pub excluded: Excluded,
    pub trajectory_length: LengthStats,
    pub action_histogram: BTreeMap<String, usize>,
    pub by_dialect: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Export {
    pub train: Vec<DatasetRecord>,
    pub val: Vec<DatasetRecord>,
    pub summary: DatasetSummary,
}

/// Builds the record for one accepted episode.
pub fn episode_record(ep: &Episode) -> Result<DatasetRecord, ExportError> {
    let fail = |message: String| ExportError::Episode { episode: ep.id.clone(), message };
    let mut turns = Vec::with_capacity(ep.turns.len() * 2);
    let mut n_actions = 0;
    for (i, t) in ep.turns.iter().enumerate() {
        let resp = t.response.as_ref().ok_or_else(|| fail(format!("turn {i} has no parsed response")))?;
        let target = render_response(resp);
        let back = parse_response(ep.dialect, &target).map_err(|e| fail(format!("turn {i}: {e}")))?;
        if back.plan != resp.plan {
            return Err(fail(format!("turn {i}: canonical rendering does not round-trip")));
        }
        n_actions += resp.plan.len();
        turns.push(RecordTurn { role: Role::User, content: t.observation.clone(), loss: false });
        turns.push(RecordTurn { role: Role::Assistant, content: target, loss: true });
    }
    Ok(DatasetRecord {
        id: ep.id.clone(),
        dialect: ep.dialect,
        system: ep.system_prompt.clone(),
        turns,
        meta: RecordMeta {
            scenario_id: ep.scenario_id.clone(),
            task: ep.task.clone(),
            n_actions,
            terminal: ep.terminal,
        },
    })
}

/// Filters, converts, shuffles and splits. The split depends only on the
/// set of record ids and the seed, not on the input order.
pub fn export(episodes: &[Episode], cfg: &ExportConfig) -> Result<Export, ExportError> {
    let mut excluded = Excluded::default();
    let mut records = Vec::new();
    for ep in episodes {
        if ep.error.is_some() {
            excluded.errored += 1;
        } else if !ep.valid || ep.turns.is_empty() {
            excluded.invalid += 1;
        } else if ep.parse_error_turns() > 0 {
            excluded.parse_errors += 1;
        } else {
            records.push(episode_record(ep)?);
        }
    }
    if records.is_empty() {
        return Err(ExportError::EmptyDataset { excluded: excluded.total() });
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    records.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_train = ((records.len() as f64) * cfg.train_ratio).round() as usize;
    let val = records.split_off(n_train.min(records.len()));
    let train = records;
    let summary = summarize(&train, &val, excluded);
    Ok(Export { train, val, summary })
}

fn summarize(train: &[DatasetRecord], val: &[DatasetRecord], excluded: Excluded) -> DatasetSummary {
    let all: Vec<&DatasetRecord> = train.iter().chain(val).collect();
    let lengths: Vec<f64> = all.iter().map(|r| r.targets().count() as f64).collect();
    let mut action_histogram = BTreeMap::new();
    let mut by_dialect = BTreeMap::new();
    for r in &all {
        *by_dialect.entry(r.dialect.as_str().to_string()).or_insert(0) += 1;
        for t in r.targets() {
            if let Ok(resp) = parse_response(r.dialect, t) {
                for a in resp.plan {
                    *action_histogram.entry(a.name.as_str().to_string()).or_insert(0) += 1;
                }
            }
        }
    }
    DatasetSummary {
        n_records: all.len(),
        n_turns: lengths.iter().sum::<f64>() as usize,
        train: train.len(),
        val: val.len(),
        excluded,
        trajectory_length: LengthStats {
            mean: mean(&lengths),
            p50: percentile(&lengths, 50.0),
            p90: percentile(&lengths, 90.0),
            max: lengths.iter().fold(0.0f64, |a, &b| a.max(b)) as usize,
        },
        action_histogram,
        by_dialect,
    }
}

pub fn records_to_jsonl(records: &[DatasetRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Writes train, val and summary files and returns their paths.
pub fn write_export(dir: &Path, ex: &Export) -> io::Result<[PathBuf; 3]> {
    fs::create_dir_all(dir)?;
    let train = dir.join(TRAIN_FILE);
    let val = dir.join(VAL_FILE);
    let summary = dir.join(DATASET_SUMMARY_FILE);
    write_checked(&train, Artifact::DatasetRecord, &records_to_jsonl(&ex.train))?;
    write_checked(&val, Artifact::DatasetRecord, &records_to_jsonl(&ex.val))?;
    let mut s = serde_json::to_string_pretty(&ex.summary).map_err(io::Error::other)?;
    s.push('\n');
    write_checked(&summary, Artifact::DatasetSummary, &s)?;
    Ok([train, val, summary])
}

pub fn read_records(path: &Path) -> io::Result<Vec<DatasetRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(io::Error::other))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    BadJson { line: usize, message: String },
    Empty { line: usize },
    LossMask { line: usize, turn: usize },
    Alternation { line: usize, turn: usize },
    UnparseableAction { line: usize, turn: usize, offset: usize, message: String },
    NonCanonical { line: usize, turn: usize },
    DuplicateId { line: usize, id: String },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::BadJson { line, message } => write!(f, "line {line}: not a record: {message}"),
            Violation::Empty { line } => write!(f, "line {line}: no assistant turns"),
            Violation::LossMask { line, turn } => {
                write!(f, "line {line} turn {turn}: loss flag must be set on assistant turns only")
            }
            Violation::Alternation { line, turn } => {
                write!(f, "line {line} turn {turn}: turns must alternate user/assistant starting with user")
            }
            Violation::UnparseableAction { line, turn, offset, message } => {
                write!(f, "line {line} turn {turn}: unparseable at offset {offset}: {message}")
            }
            Violation::NonCanonical { line, turn } => {
                write!(f, "line {line} turn {turn}: assistant content is not in canonical form")
            }
            Violation::DuplicateId { line, id } => write!(f, "line {line}: duplicate id {id}"),
        }
    }
}

/// Checks a dataset file line by line. Line numbers are 1-based.
pub fn verify_dataset_text(text: &str) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = match serde_json::from_str(raw) {
            Ok(r) => r,
            Err(e) => {
                out.push(Violation::BadJson { line, message: e.to_string() });
                continue;
            }
        };
        if !seen.insert(rec.id.clone()) {
            out.push(Violation::DuplicateId { line, id: rec.id.clone() });
        }
        if !rec.turns.iter().any(|t| t.role == Role::Assistant) {
            out.push(Violation::Empty { line });
        }
        for (turn, t) in rec.turns.iter().enumerate() {
            let want = if turn % 2 == 0 { Role::User } else { Role::Assistant };
            if t.role != want {
                out.push(Violation::Alternation { line, turn });
            }
            if t.loss != (t.role == Role::Assistant) {
                out.push(Violation::LossMask { line, turn });
            }
            if t.role != Role::Assistant {
                continue;
            }
            match parse_response(rec.dialect, &t.content) {
                Ok(resp) => {
                    if render_response(&resp) != t.content {
                        out.push(Violation::NonCanonical { line, turn });
                    }
                }
                Err(e) => out.push(Violation::UnparseableAction { line, turn, offset: e.offset, message: e.message }),
            }
        }
    }
    out
}

pub fn verify_dataset(path: &Path) -> io::Result<Vec<Violation>> {
    Ok(verify_dataset_text(&fs::read_to_string(path)?))
}
