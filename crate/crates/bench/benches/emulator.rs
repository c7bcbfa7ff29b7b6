use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use plansynth_core::elicitation::{run_episode, ElicitConfig};
use plansynth_core::masking::mask_environment;
use plansynth_core::oracle::OracleBackend;
use plansynth_core::scenario_gen::{procedural_generate, GenConfig};
use plansynth_core::{Dialect, WorldState};

const SIZES: [usize; 3] = [10, 30, 60];

fn spine(size: usize) -> plansynth_core::scenario_gen::Scenario {
    procedural_generate(&GenConfig { env_size: size, ..GenConfig::default() }, 0, 0)
}

fn masking(c: &mut Criterion) {
    let mut g = c.benchmark_group("mask_environment");
    for n in SIZES {
        let env = spine(n).environment;
        g.bench_with_input(BenchmarkId::from_parameter(n), &env, |b, env| {
            b.iter(|| mask_environment(black_box(env), 0.5, 7))
        });
    }
    g.finish();
}

fn apply_actions(c: &mut Criterion) {
    let mut g = c.benchmark_group("apply_oracle_actions");
    for n in SIZES {
        let sc = spine(n);
        let (ep, _) = run_episode(&OracleBackend::new(Dialect::Spine), &sc, 0, &ElicitConfig::default(), 0);
        let actions: Vec<_> = ep.executed().cloned().collect();
        let start = WorldState::new(&ep.mask, usize::MAX);
        g.bench_with_input(BenchmarkId::from_parameter(n), &actions, |b, actions| {
            b.iter(|| {
                let mut s = start.clone();
                for a in actions {
                    if let Ok((next, delta)) = s.apply(a) {
                        black_box(delta);
                        s = next;
                    }
                }
                s
            })
        });
    }
    g.finish();
}

fn oracle_episode(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle_episode");
    for d in Dialect::ALL {
        let sc = procedural_generate(&GenConfig { dialect: d, env_size: 20, ..GenConfig::default() }, 0, 0);
        let oracle = OracleBackend::new(d);
        let cfg = ElicitConfig::default();
        g.bench_function(BenchmarkId::from_parameter(d), |b| b.iter(|| run_episode(&oracle, &sc, 0, &cfg, 0)));
    }
    g.finish();
}

criterion_group!(benches, masking, apply_actions, oracle_episode);
criterion_main!(benches);
