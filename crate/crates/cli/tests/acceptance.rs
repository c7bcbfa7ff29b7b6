//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use plansynth_core::dataset_out::{verify_dataset, DatasetSummary, TRAIN_FILE, VAL_FILE};
use plansynth_core::elicitation::{read_episodes, ElicitSummary, EPISODES_FILE, SUMMARY_FILE};
use plansynth_core::env_model::reachable_regions;
use plansynth_core::eval::{BenchReport, EvalReport};
use plansynth_core::masking::mask_environment;
use plansynth_core::plan_io::parse_response;
use plansynth_core::scenario_gen::Scenario;
use plansynth_core::{Dialect, Environment, WorldState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use tempfile::TempDir;

const MASKING_CASES: usize = 1000;
const EMULATOR_GRAPHS: usize = 500;
const EMULATOR_MAX_REGIONS: usize = 8;
const EMULATOR_STEPS: usize = 25;
const ORACLE_TASKS: usize = 100;
const FILTER_TASKS: usize = 20;
const LATENCY_QUERIES: usize = 60;
const LATENCY_DELAY_MS: u64 = 200;
const LATENCY_BAND_MS: (f64, f64) = (150.0, 300.0);
const FUZZ_PER_DIALECT: usize = 100_000;
const FUZZ_MAX_BYTES: usize = 64 * 1024;
const FUZZ_PARSE_LIMIT: Duration = Duration::from_millis(50);
const FUZZ_CORPUS: usize = 500;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn plansynth(args: &[&str]) -> Result<String, (Option<i32>, String)> {
    let out = Command::new(env!("CARGO_BIN_EXE_plansynth")).args(args).output().map_err(|e| (None, e.to_string()))?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err((out.status.code(), String::from_utf8_lossy(&out.stderr).into_owned()))
    }
}

fn run_ok(args: &[&str]) -> Result<String, String> {
    plansynth(args).map_err(|(code, err)| format!("plansynth {} exited {code:?}: {}", args.join(" "), err.trim()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn write_config(dir: &Path, name: &str, body: &str) -> Result<PathBuf, String> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| e.to_string())?;
    Ok(path)
}

fn fixture_fidelity() -> Check {
    for (name, check) in support::fixtures::ALL {
        catch_unwind(check).map_err(|_| format!("{name} fixture failed"))?;
    }
    Ok(format!("{} fixture groups", support::fixtures::ALL.len()))
}

fn masking_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..MASKING_CASES {
        let (_, env) = support::random_env(&mut rng);
        let fraction = rng.gen_range(0.0..=1.0);
        let seed = rng.gen();
        let v = support::masking_violations(&env, fraction, seed);
        ensure(v.is_empty(), || format!("case {case} (fraction {fraction}, seed {seed}): {v:?}"))?;
    }
    Ok(format!("{MASKING_CASES} triples"))
}

fn emulator_soundness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut regions = 0;
    for case in 0..EMULATOR_GRAPHS {
        let g = support::random_graph(&mut rng, EMULATOR_MAX_REGIONS);
        for r in &g.regions {
            let fast = reachable_regions(&g, &r.name, g.region_edges.iter()).map_err(|e| e.to_string())?;
            let slow = support::brute_force_reachable(&g.region_edges, &r.name);
            ensure(fast == slow, || format!("graph {case}, from {}: {fast:?} != {slow:?}", r.name))?;
            regions += 1;
        }
        let fraction = rng.gen_range(0.0..0.9);
        let m = mask_environment(&Environment::SceneGraph(g), fraction, rng.gen());
        let v = support::emulator_violations(&mut rng, Dialect::Spine, WorldState::new(&m, 10), EMULATOR_STEPS);
        ensure(v.is_empty(), || format!("graph {case}: {v:?}"))?;
    }
    Ok(format!("{EMULATOR_GRAPHS} graphs, {regions} reachability queries"))
}

fn oracle_pipeline() -> Check {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for d in Dialect::ALL {
        let out = tmp.path().join(d.as_str());
        let cfg = write_config(
            tmp.path(),
            &format!("{d}.toml"),
            &format!(
                "dialect = \"{d}\"\nbase_seed = 100\noutput_root = \"{}\"\nn_scenarios = {}\n\
                 generator = {{ backend = \"procedural\" }}\nplanner = {{ backend = \"oracle\" }}\n\
                 [generation]\nn_tasks = 5\ntask_mix = \"fully\"\n",
                out.display(),
                ORACLE_TASKS / 5
            ),
        )?;
        run_ok(&["pipeline", "--config", p(&cfg)])?;
        let report: EvalReport = read_json(&out.join("eval/eval_report.json"))?;
        let summary: ElicitSummary = read_json(&out.join("episodes/main").join(SUMMARY_FILE))?;
        ensure(report.n_episodes == ORACLE_TASKS, || format!("{d}: {} episodes", report.n_episodes))?;
        ensure(report.success_rate == 1.0, || format!("{d}: success rate {}", report.success_rate))?;
        ensure(report.invalid == 0 && summary.valid == summary.total, || {
            format!("{d}: {} invalid in eval, {}/{} valid in elicitation", report.invalid, summary.valid, summary.total)
        })?;
        ensure(
            report.outcomes.iter().all(|o| o.specification == Some(plansynth_core::scenario_gen::Specification::Fully)),
            || format!("{d}: not every task is fully specified"),
        )?;
        for f in [TRAIN_FILE, VAL_FILE] {
            let v = verify_dataset(&out.join("dataset").join(f)).map_err(|e| e.to_string())?;
            ensure(v.is_empty(), || format!("{d} {f}: {}", v[0]))?;
        }
        notes.push(format!("{d} {}/{}", report.successes, report.n_episodes));
    }
    Ok(notes.join(", "))
}

fn validation_filter() -> Check {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let o = p(tmp.path());
    let n = (FILTER_TASKS / 5).to_string();
    let repeat = "repeat:[inspect(nowhere)]";
    run_ok(&["generate", "--n", &n, "--output", o])?;
    run_ok(&["elicit", "--backend", repeat, "--output", o])?;
    let s: ElicitSummary = read_json(&tmp.path().join("episodes/main").join(SUMMARY_FILE))?;
    ensure(s.total == FILTER_TASKS && s.timeout == FILTER_TASKS, || format!("{} of {} timed out", s.timeout, s.total))?;
    match plansynth(&["export", "--output", o]) {
        Err((Some(3), err)) if err.contains("no valid episodes") => {}
        other => return Err(format!("export with validation should drop everything: {other:?}")),
    }
    ensure(!tmp.path().join("dataset").join(TRAIN_FILE).exists(), || "a dataset was written".into())?;
    run_ok(&["elicit", "--backend", repeat, "--no-validation", "--output", o])?;
    run_ok(&["export", "--output", o])?;
    let d: DatasetSummary = read_json(&tmp.path().join("dataset/dataset_summary.json"))?;
    ensure(d.n_records == FILTER_TASKS && d.train + d.val == FILTER_TASKS, || {
        format!("{} records exported without validation", d.n_records)
    })?;
    Ok(format!("{FILTER_TASKS}/{FILTER_TASKS} excluded, then {} exported", d.n_records))
}

fn ablation_masking() -> Check {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let o = p(tmp.path());
    run_ok(&["generate", "--n", "10", "--seed", "7", "--output", o])?;
    run_ok(&["elicit", "--run-id", "unmasked", "--no-masking", "--output", o])?;
    run_ok(&["elicit", "--run-id", "masked", "--output", o])?;
    let mut regions = BTreeMap::new();
    for e in std::fs::read_dir(tmp.path().join("scenarios")).map_err(|e| e.to_string())? {
        let path = e.map_err(|e| e.to_string())?.path();
        if path.file_name().unwrap().to_string_lossy().starts_with("scenario_") {
            let s: Scenario = read_json(&path)?;
            let names: Vec<String> =
                s.environment.as_scene_graph().unwrap().regions.iter().map(|r| r.name.clone()).collect();
            regions.insert(s.id, names);
        }
    }
    let shown = |obs: &str, names: &[String]| names.iter().filter(|n| obs.contains(&format!("\"{n}\""))).count();
    let (mut full, mut fewer) = (0, 0);
    for (run, masked) in [("unmasked", false), ("masked", true)] {
        let eps =
            read_episodes(&tmp.path().join("episodes").join(run).join(EPISODES_FILE)).map_err(|e| e.to_string())?;
        ensure(eps.len() == 50, || format!("{run}: {} episodes", eps.len()))?;
        for ep in &eps {
            let names = &regions[&ep.scenario_id];
            let k = shown(ep.first_observation(), names);
            if !masked {
                ensure(k == names.len(), || format!("{}: {k}/{} regions shown unmasked", ep.id, names.len()))?;
                full += 1;
            } else if ep.mask.mask_fraction > 0.0 {
                ensure(k < names.len(), || {
                    format!("{}: all {k} regions shown at fraction {}", ep.id, ep.mask.mask_fraction)
                })?;
                fewer += 1;
            }
        }
    }
    ensure(fewer > 0, || "no masked episode had fraction > 0".into())?;
    Ok(format!("{full} unmasked episodes show every region, {fewer} masked show fewer"))
}

fn latency_differential() -> Check {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let cfg = write_config(
        tmp.path(),
        "bench.toml",
        &format!(
            "dialect = \"spine\"\nbase_seed = 0\noutput_root = \"{}\"\n\
             generator = {{ backend = \"procedural\" }}\nplanner = {{ backend = \"oracle\" }}\n\
             [bench]\ntarget = \"mock\"\nn_queries = {LATENCY_QUERIES}\ndelays_ms = [0, {LATENCY_DELAY_MS}]\n",
            tmp.path().display()
        ),
    )?;
    run_ok(&["bench", "--config", p(&cfg)])?;
    let r: BenchReport = read_json(&tmp.path().join("bench/latency.json"))?;
    ensure(r.runs.iter().all(|x| x.samples_ms.len() == LATENCY_QUERIES), || "wrong sample count".into())?;
    let diff = r.differential_ms(LATENCY_DELAY_MS).ok_or("missing condition")?;
    let (lo, hi) = LATENCY_BAND_MS;
    ensure((lo..=hi).contains(&diff), || format!("differential {diff:.1} ms outside [{lo}, {hi}]"))?;
    Ok(format!("differential {diff:.1} ms over {LATENCY_QUERIES} queries each"))
}

fn parser_robustness() -> Check {
    let mut notes = Vec::new();
    for d in Dialect::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let corpus: Vec<String> = (0..FUZZ_CORPUS).map(|_| support::random_response(&mut rng, d)).collect();
        let (mut crashes, mut slow, mut parsed) = (0, 0, 0);
        let mut worst = Duration::ZERO;
        for _ in 0..FUZZ_PER_DIALECT {
            let base = corpus[rng.gen_range(0..corpus.len())].clone();
            let input = support::mutate(&mut rng, base, FUZZ_MAX_BYTES);
            let t = Instant::now();
            match catch_unwind(AssertUnwindSafe(|| parse_response(d, &input))) {
                Ok(r) => parsed += r.is_ok() as usize,
                Err(_) => crashes += 1,
            }
            let dt = t.elapsed();
            worst = worst.max(dt);
            slow += (dt >= FUZZ_PARSE_LIMIT) as usize;
        }
        ensure(crashes == 0 && slow == 0, || {
            format!("{d}: {crashes} crashes, {slow} parses over {FUZZ_PARSE_LIMIT:?}")
        })?;
        notes.push(format!("{d} ok ({parsed} parsed, worst {:.2} ms)", worst.as_secs_f64() * 1000.0));
    }
    Ok(notes.join(", "))
}

fn snapshot(root: &Path, sub: &str) -> Result<BTreeMap<String, Vec<u8>>, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) -> std::io::Result<()> {
        for e in std::fs::read_dir(dir)? {
            let path = e?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                out.insert(path.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&path)?);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(root, &root.join(sub), &mut out).map_err(|e| format!("{}: {e}", root.join(sub).display()))?;
    Ok(out)
}

fn determinism() -> Check {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let dirs: Vec<PathBuf> = ["recorded", "replay_1", "replay_2"].iter().map(|n| tmp.path().join(n)).collect();
    let common = ["pipeline", "--seed", "21", "--n", "5"];
    run_ok(&[&common[..], &["--output", p(&dirs[0])]].concat())?;
    let replay = format!("replay:{}", dirs[0].join("episodes/main").display());
    for d in &dirs[1..] {
        run_ok(&[&common[..], &["--output", p(d), "--backend", &replay]].concat())?;
    }
    let mut files = 0;
    for sub in ["scenarios", "episodes", "dataset"] {
        let want = snapshot(&dirs[0], sub)?;
        for d in &dirs[1..] {
            let got = snapshot(d, sub)?;
            let diff: Vec<&String> = want.keys().chain(got.keys()).filter(|k| want.get(*k) != got.get(*k)).collect();
            ensure(diff.is_empty(), || format!("{} differs: {diff:?}", d.file_name().unwrap().to_string_lossy()))?;
        }
        files += want.len();
    }
    Ok(format!("{files} files identical across 2 replays"))
}

type Criterion = (&'static str, Duration, fn() -> Check);

fn main() {
    let criteria: [Criterion; 9] = [
        ("fixture fidelity", Duration::from_secs(5), fixture_fidelity),
        ("masking properties", Duration::from_secs(30), masking_properties),
        ("emulator soundness", Duration::from_secs(60), emulator_soundness),
        ("oracle end-to-end", Duration::from_secs(120), oracle_pipeline),
        ("validation filter", Duration::from_secs(30), validation_filter),
        ("ablation masking", Duration::from_secs(30), ablation_masking),
        ("latency differential", Duration::from_secs(120), latency_differential),
        ("parser robustness", Duration::from_secs(300), parser_robustness),
        ("determinism", Duration::from_secs(120), determinism),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let t = Instant::now();
        let result = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let dt = t.elapsed();
        let result = result.and_then(|note| {
            ensure(dt < budget, || format!("took {:.1} s, budget {} s", dt.as_secs_f64(), budget.as_secs()))?;
            Ok(note)
        });
        match result {
            Ok(note) => println!("PASS {name}: {note} [{:.2} s < {} s]", dt.as_secs_f64(), budget.as_secs()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{:.2} s, budget {} s]", dt.as_secs_f64(), budget.as_secs());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
