use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use plansynth_core::elicitation::{collect_dataset, ElicitConfig};
use plansynth_core::oracle::OracleBackend;
use plansynth_core::plan_io::parse_response;
use plansynth_core::scenario_gen::{parse_generation, procedural_generate, GenConfig};
use plansynth_core::Dialect;

const BOARDWALK: &str = include_str!("../../core/tests/fixtures/boardwalk_generation.json");

/// Planner replies from oracle episodes on a few procedural scenarios.
fn replies(dialect: Dialect) -> Vec<String> {
    let cfg = GenConfig { dialect, env_size: 20, ..GenConfig::default() };
    let scenarios: Vec<_> = (0..4).map(|i| procedural_generate(&cfg, 0, i)).collect();
    let run = collect_dataset(&OracleBackend::new(dialect), &scenarios, &ElicitConfig::default(), 0);
    run.episodes.iter().flat_map(|e| e.turns.iter().map(|t| t.raw_response.clone())).collect()
}

fn planner_replies(c: &mut Criterion) {
    let mut g = c.benchmark_group("parse_response");
    for d in Dialect::ALL {
        let inputs = replies(d);
        g.throughput(Throughput::Bytes(inputs.iter().map(|s| s.len() as u64).sum()));
        g.bench_with_input(BenchmarkId::from_parameter(d), &inputs, |b, inputs| {
            b.iter(|| {
                for s in inputs {
                    black_box(parse_response(d, black_box(s)).ok());
                }
            })
        });
    }
    g.finish();
}

fn generator_output(c: &mut Criterion) {
    let cfg = GenConfig { env_size: 25, n_tasks: 25, ..GenConfig::default() };
    c.bench_function("parse_generation/boardwalk", |b| {
        b.iter(|| parse_generation(black_box(BOARDWALK), &cfg).unwrap())
    });
}

criterion_group!(benches, planner_replies, generator_output);
criterion_main!(benches);
