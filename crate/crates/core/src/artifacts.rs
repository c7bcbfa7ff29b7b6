//! JSON schemas for every file the pipeline writes, and writers that check
//! content against them before it reaches disk.

use std::collections::HashMap;
use std::fmt;
use std::io;
use std::path::Path;
use std::sync::OnceLock;

use jsonschema::{Resource, Validator};
use serde_json::Value;

const URN: &str = "urn:plansynth:";

const SOURCES: &[(&str, &str)] = &[
    ("common", include_str!("../../../docs/schemas/common.schema.json")),
    ("scene_graph", include_str!("../../../docs/schemas/scene_graph.schema.json")),
    ("object_set", include_str!("../../../docs/schemas/object_set.schema.json")),
    ("scenario", include_str!("../../../docs/schemas/scenario.schema.json")),
    ("generation_summary", include_str!("../../../docs/schemas/generation_summary.schema.json")),
    ("transcript_entry", include_str!("../../../docs/schemas/transcript_entry.schema.json")),
    ("episode", include_str!("../../../docs/schemas/episode.schema.json")),
    ("elicit_summary", include_str!("../../../docs/schemas/elicit_summary.schema.json")),
    ("dataset_record", include_str!("../../../docs/schemas/dataset_record.schema.json")),
    ("dataset_summary", include_str!("../../../docs/schemas/dataset_summary.schema.json")),
    ("eval_report", include_str!("../../../docs/schemas/eval_report.schema.json")),
    ("eval_outcome_row", include_str!("../../../docs/schemas/eval_outcome_row.schema.json")),
    ("bench_report", include_str!("../../../docs/schemas/bench_report.schema.json")),
    ("latency_row", include_str!("../../../docs/schemas/latency_row.schema.json")),
    ("run_config", include_str!("../../../docs/schemas/run_config.schema.json")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Artifact {
    SceneGraph,
    ObjectSet,
    Scenario,
    GenerationSummary,
    TranscriptEntry,
    Episode,
    ElicitSummary,
    DatasetRecord,
    DatasetSummary,
    EvalReport,
    EvalOutcomeRow,
    BenchReport,
    LatencyRow,
    RunConfig,
}

/// How a file of a given artifact is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Json,
    /// One JSON value per non-empty line.
    JsonLines,
    /// Header row; each data row is checked as an object keyed by column.
    Csv,
}

impl Artifact {
    pub const ALL: [Artifact; 14] = [
        Artifact::SceneGraph,
        Artifact::ObjectSet,
        Artifact::Scenario,
        Artifact::GenerationSummary,
        Artifact::TranscriptEntry,
        Artifact::Episode,
        Artifact::ElicitSummary,
        Artifact::DatasetRecord,
        Artifact::DatasetSummary,
        Artifact::EvalReport,
        Artifact::EvalOutcomeRow,
        Artifact::BenchReport,
        Artifact::LatencyRow,
        Artifact::RunConfig,
    ];

    /// Schema name; the file is `docs/schemas/<name>.schema.json`.
    pub fn name(self) -> &'static str {
        match self {
            Artifact::SceneGraph => "scene_graph",
            Artifact::ObjectSet => "object_set",
            Artifact::Scenario => "scenario",
            Artifact::GenerationSummary => "generation_summary",
            Artifact::TranscriptEntry => "transcript_entry",
            Artifact::Episode => "episode",
            Artifact::ElicitSummary => "elicit_summary",
            Artifact::DatasetRecord => "dataset_record",
            Artifact::DatasetSummary => "dataset_summary",
            Artifact::EvalReport => "eval_report",
            Artifact::EvalOutcomeRow => "eval_outcome_row",
            Artifact::BenchReport => "bench_report",
            Artifact::LatencyRow => "latency_row",
            Artifact::RunConfig => "run_config",
        }
    }

    pub fn layout(self) -> Layout {
        match self {
            Artifact::TranscriptEntry | Artifact::Episode | Artifact::DatasetRecord => Layout::JsonLines,
            Artifact::EvalOutcomeRow | Artifact::LatencyRow => Layout::Csv,
            _ => Layout::Json,
        }
    }

    pub fn schema_text(self) -> &'static str {
        SOURCES.iter().find(|(n, _)| *n == self.name()).expect("every artifact has a schema").1
    }
}

impl fmt::Display for Artifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{artifact}{}: {message} (at {pointer:?})", .line.map(|l| format!(" line {l}")).unwrap_or_default())]
pub struct SchemaViolation {
    pub artifact: Artifact,
    /// 1-based line (JSON lines) or data row (CSV).
    pub line: Option<usize>,
    /// JSON pointer into the offending value.
    pub pointer: String,
    pub message: String,
}

fn validators() -> &'static HashMap<Artifact, Validator> {
    static CELL: OnceLock<HashMap<Artifact, Validator>> = OnceLock::new();
    CELL.get_or_init(|| {
        let parsed: Vec<(&str, Value)> = SOURCES
            .iter()
            .map(|(n, text)| (*n, serde_json::from_str(text).unwrap_or_else(|e| panic!("schema {n}: {e}"))))
            .collect();
        Artifact::ALL
            .into_iter()
            .map(|a| {
                let mut opts = jsonschema::options().with_draft(jsonschema::Draft::Draft202012);
                for (n, v) in &parsed {
                    let res = Resource::from_contents(v.clone()).unwrap_or_else(|e| panic!("schema {n}: {e}"));
                    opts = opts.with_resource(format!("{URN}{n}"), res);
                }
                let root = &parsed.iter().find(|(n, _)| *n == a.name()).expect("schema source").1;
                let v = opts.build(root).unwrap_or_else(|e| panic!("schema {a}: {e}"));
                (a, v)
            })
            .collect()
    })
}

pub fn check_value(artifact: Artifact, value: &Value) -> Result<(), SchemaViolation> {
    check_at(artifact, value, None)
}

fn check_at(artifact: Artifact, value: &Value, line: Option<usize>) -> Result<(), SchemaViolation> {
    match validators()[&artifact].iter_errors(value).next() {
        None => Ok(()),
        Some(e) => {
            Err(SchemaViolation { artifact, line, pointer: e.instance_path.to_string(), message: e.to_string() })
        }
    }
}

fn unparseable(artifact: Artifact, line: Option<usize>, message: String) -> SchemaViolation {
    SchemaViolation { artifact, line, pointer: String::new(), message }
}

/// Checks the full text of a file of `artifact`, according to its layout.
pub fn check_text(artifact: Artifact, text: &str) -> Result<(), SchemaViolation> {
    match artifact.layout() {
        Layout::Json => {
            let v: Value = serde_json::from_str(text).map_err(|e| unparseable(artifact, None, e.to_string()))?;
            check_value(artifact, &v)
        }
        Layout::JsonLines => {
            for (i, l) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let v: Value =
                    serde_json::from_str(l).map_err(|e| unparseable(artifact, Some(i + 1), e.to_string()))?;
                check_at(artifact, &v, Some(i + 1))?;
            }
            Ok(())
        }
        Layout::Csv => {
            let mut r = csv::Reader::from_reader(text.as_bytes());
            let header = r.headers().map_err(|e| unparseable(artifact, None, e.to_string()))?.clone();
            let required = csv_columns(artifact);
            if header.iter().ne(required.iter().map(String::as_str)) {
                return Err(unparseable(
                    artifact,
                    None,
                    format!("columns {:?}, expected {required:?}", header.iter().collect::<Vec<_>>()),
                ));
            }
            for (i, row) in r.records().enumerate() {
                let row = row.map_err(|e| unparseable(artifact, Some(i + 1), e.to_string()))?;
                let obj: serde_json::Map<String, Value> =
                    header.iter().zip(row.iter()).map(|(k, v)| (k.to_string(), Value::from(v))).collect();
                check_at(artifact, &Value::Object(obj), Some(i + 1))?;
            }
            Ok(())
        }
    }
}

/// Column order of a CSV artifact: its schema's `required` list.
fn csv_columns(artifact: Artifact) -> Vec<String> {
    let v: Value = serde_json::from_str(artifact.schema_text()).expect("schema parses");
    v["required"].as_array().into_iter().flatten().filter_map(|s| s.as_str().map(String::from)).collect()
}

/// Writes `text` to `path` after checking it. Nothing is written on failure.
pub fn write_checked(path: &Path, artifact: Artifact, text: &str) -> io::Result<()> {
    check_text(artifact, text)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
    std::fs::write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_schema_compiles() {
        assert_eq!(validators().len(), Artifact::ALL.len());
    }

    #[test]
    fn violations_point_at_the_field() {
        let bad = serde_json::json!({"total": 1, "valid": "yes"});
        let e = check_value(Artifact::ElicitSummary, &bad).unwrap_err();
        assert!(e.pointer == "/valid" || e.pointer.is_empty(), "{e}");
        let e = check_text(Artifact::Episode, "{}\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = check_text(Artifact::LatencyRow, "query_index,latency_ms\n0,1.0\n").unwrap_err();
        assert!(e.message.contains("columns"), "{e}");
        check_text(Artifact::LatencyRow, "query_index,latency_ms,condition\n0,1.500,delay_0ms\n").unwrap();
        assert!(check_text(Artifact::LatencyRow, "query_index,latency_ms,condition\n0,fast,delay_0ms\n").is_err());
    }

    #[test]
    fn example_graph_is_accepted() {
        check_text(Artifact::SceneGraph, include_str!("../tests/fixtures/example_graph.json")).unwrap();
        let e = check_text(Artifact::SceneGraph, "{}").unwrap_err();
        assert!(e.message.contains("regions"), "{e}");
    }

    #[test]
    fn published_sample_conforms() {
        check_text(Artifact::DatasetRecord, include_str!("../../../docs/dataset/sample.jsonl")).unwrap();
    }

    #[test]
    fn rejected_writes_leave_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("summary.json");
        let e = write_checked(&p, Artifact::ElicitSummary, "{\"total\": -1}").unwrap_err();
        assert_eq!(e.kind(), io::ErrorKind::InvalidData);
        assert!(!p.exists());
    }
}
