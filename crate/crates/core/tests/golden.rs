//! Byte-level goldens for the interfaces other programs consume. Set
//! `UPDATE_GOLDEN=1` to rewrite them.

use std::path::PathBuf;
use std::time::Duration;

use plansynth_core::dataset_out::{export, records_to_jsonl, verify_dataset_text, ExportConfig};
use plansynth_core::elicitation::{collect_dataset, ElicitConfig};
use plansynth_core::env_model::parse_environment;
use plansynth_core::llm_client::{completion_body, HttpBackend, HttpConfig, RepeatBackend};
use plansynth_core::masking::render_observation;
use plansynth_core::mock_server::MockServer;
use plansynth_core::oracle::OracleBackend;
use plansynth_core::plan_io::initial_messages;
use plansynth_core::scenario_gen::{procedural_generate, GenConfig};
use plansynth_core::{ChatBackend, Dialect, RequestContext};
use serde_json::Value;

fn docs(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs").join(rel)
}

fn golden(rel: &str, actual: &str) {
    let path = docs(rel);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, want, "{} is out of date", path.display());
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).unwrap() + "\n"
}

#[test]
fn chat_request_and_response() {
    let env = parse_environment(include_str!("fixtures/example_graph.json")).unwrap();
    let msgs = initial_messages(Dialect::Spine, "Go to road_6.", &render_observation(&env, Dialect::Spine));
    let reply = r#"{"reasoning": "road_6 is connected to bridge_1", "plan": "[goto(road_6)]"}"#;
    let server = MockServer::from_backend(RepeatBackend(reply.into()), Duration::ZERO).unwrap();
    let client = HttpBackend::new(HttpConfig { base_url: server.base_url(), ..HttpConfig::default() }).unwrap();
    let got = client.complete(&msgs, &RequestContext::default()).unwrap();
    assert_eq!(got.text, reply);
    let sent = serde_json::to_value(&server.received()[0]).unwrap();
    golden("wire/chat_request.json", &pretty(&sent));
    golden("wire/chat_response.json", &pretty(&completion_body("planner", reply)));
}

#[test]
fn dataset_sample() {
    let mut lines = Vec::new();
    for (seed, d) in Dialect::ALL.into_iter().enumerate() {
        let cfg = GenConfig { dialect: d, env_size: 6, n_tasks: 1, ..GenConfig::default() };
        let sc = procedural_generate(&cfg, seed as u64, 0);
        let run = collect_dataset(&OracleBackend::new(d), &[sc], &ElicitConfig::default(), 3);
        let ex = export(&run.episodes, &ExportConfig { train_ratio: 1.0, seed: 0 }).unwrap();
        lines.push(records_to_jsonl(&ex.train));
    }
    let text = lines.concat();
    assert_eq!(verify_dataset_text(&text), vec![]);
    golden("dataset/sample.jsonl", &text);

    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(docs("schemas/dataset_record.schema.json")).unwrap()).unwrap();
    for line in text.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        for key in schema["required"].as_array().unwrap() {
            assert!(rec.get(key.as_str().unwrap()).is_some(), "missing {key}");
        }
        let props = schema["properties"].as_object().unwrap();
        assert!(rec.as_object().unwrap().keys().all(|k| props.contains_key(k)));
    }
}
