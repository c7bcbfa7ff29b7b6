use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn plansynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plansynth")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = plansynth(args);
    assert!(out.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Relative path -> bytes for every file under `root`.
fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn same_seed_same_bytes() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&["pipeline", "--dialect", "saycan", "--seed", "11", "--n", "4", "--output", s(d)]);
    }
    let (sa, mut sb) = (snapshot(&a), snapshot(&b));
    // The config copy records the output root, which differs on purpose.
    sb.insert("run_config.toml".into(), sa["run_config.toml"].clone());
    assert_eq!(sa, sb);
    assert!(sa.keys().any(|k| k.ends_with("train.jsonl")));
}

#[test]
fn replayed_run_matches_recording() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["pipeline", "--seed", "5", "--n", "3", "--output", s(&a)]);
    let replay = format!("replay:{}", a.join("episodes/main").display());
    ok(&["pipeline", "--seed", "5", "--n", "3", "--output", s(&b), "--backend", &replay]);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    for dir in ["scenarios/", "episodes/", "dataset/"] {
        let pick = |m: &BTreeMap<String, Vec<u8>>| {
            m.iter().filter(|(k, _)| k.starts_with(dir)).map(|(k, v)| (k.clone(), v.clone())).collect::<Vec<_>>()
        };
        assert!(!pick(&sa).is_empty());
        assert_eq!(pick(&sa), pick(&sb), "{dir} differs");
    }
}

#[test]
fn missing_required_key_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "dialect = \"spine\"\noutput_root = \"x\"\ngenerator = { backend = \"procedural\" }\nplanner = { backend = \"oracle\" }\n").unwrap();
    let out = plansynth(&["generate", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("base_seed") && err.contains("run.toml"), "{err}");
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn bad_backend_flag_exits_2() {
    assert_eq!(plansynth(&["elicit", "--backend", "gpt"]).status.code(), Some(2));
    assert_eq!(plansynth(&["generate", "--backend", "oracle"]).status.code(), Some(2));
}

#[test]
fn config_file_pipeline_with_bench() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            r#"dialect = "llm_planner"
base_seed = 3
output_root = "{}"
run_id = "first"
n_scenarios = 2

[generator]
backend = "procedural"

[planner]
backend = "oracle"

[generation]
env_size = 10
n_tasks = 3

[export]
train_ratio = 0.5

[bench]
n_queries = 3
delays_ms = [0, 20]
service_ms = 1

[pipeline]
bench = true
"#,
            out.display()
        ),
    )
    .unwrap();
    let stdout = ok(&["pipeline", "--config", s(&cfg)]);
    assert!(stdout.contains("bench: delay_20ms"), "{stdout}");
    for f in [
        "run_config.toml",
        "scenarios/scenario_3_0.json",
        "scenarios/scenario_3_1.json",
        "scenarios/generation_summary.json",
        "episodes/first/episodes.jsonl",
        "episodes/first/summary.json",
        "dataset/train.jsonl",
        "dataset/val.jsonl",
        "dataset/dataset_summary.json",
        "eval/eval_report.json",
        "eval/eval_outcomes.csv",
        "bench/latency.json",
        "bench/latency.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let copy = std::fs::read_to_string(out.join("run_config.toml")).unwrap();
    assert!(copy.contains("llm_planner") && copy.contains("train_ratio = 0.5"));
    ok(&["verify", s(&out.join("dataset/train.jsonl"))]);
    let csv = std::fs::read_to_string(out.join("bench/latency.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);

    // Fewer scenarios on a rerun leaves no stale files behind.
    ok(&["generate", "--config", s(&cfg), "--n", "1"]);
    assert!(!out.join("scenarios/scenario_3_1.json").exists());
}

#[test]
fn unusable_planner_fails_export() {
    let tmp = TempDir::new().unwrap();
    let o = s(tmp.path());
    ok(&["generate", "--n", "1", "--output", o]);
    let stdout = ok(&["elicit", "--backend", "repeat:[inspect(nowhere)]", "--output", o]);
    assert!(stdout.contains("0 valid"), "{stdout}");
    let out = plansynth(&["export", "--output", o]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no valid episodes"));
    ok(&["elicit", "--backend", "repeat:[inspect(nowhere)]", "--no-validation", "--output", o]);
    ok(&["export", "--output", o]);
}

#[test]
fn verify_flags_broken_lines() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("d.jsonl");
    std::fs::write(&p, "{}\n\nnot json\n").unwrap();
    let out = plansynth(&["verify", s(&p)]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("line 1") && text.contains("line 3"), "{text}");
}

#[test]
fn dry_run_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("never");
    let plan = ok(&["pipeline", "--dry-run", "--no-masking", "--output", s(&out)]);
    assert!(plan.contains("masking off") && plan.lines().count() == 5, "{plan}");
    assert!(!out.exists());
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            let cfg = plansynth_cli::RunConfig::load(&p).unwrap();
            cfg.validate().unwrap();
            let v = serde_json::to_value(&cfg).unwrap();
            plansynth_core::artifacts::check_value(plansynth_core::artifacts::Artifact::RunConfig, &v).unwrap();
            let plan = ok(&["pipeline", "--dry-run", "--config", s(&p)]);
            assert!(plan.contains("generate"), "{plan}");
            n += 1;
        }
    }
    assert!(n >= 4);
}
