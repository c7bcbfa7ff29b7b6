use plansynth_core::elicitation::{collect_dataset, ElicitConfig};
use plansynth_core::oracle::OracleBackend;
use plansynth_core::scenario_gen::{procedural_generate, GenConfig, TaskMix};
use plansynth_core::Dialect;

#[test]
fn oracle_solves_procedural_suites() {
    for d in Dialect::ALL {
        for size in [4usize, 8, 16, 30, 50] {
            let g =
                GenConfig { dialect: d, env_size: size, n_tasks: 6, task_mix: TaskMix::Mixed, ..GenConfig::default() };
            let scenarios: Vec<_> = (0..20).map(|i| procedural_generate(&g, size as u64, i)).collect();
            for budget in [4usize, 10] {
                let cfg = ElicitConfig { max_iterations: budget, ..ElicitConfig::default() };
                let run = collect_dataset(&OracleBackend::new(d), &scenarios, &cfg, 99);
                for e in &run.episodes {
                    assert!(e.turns.iter().all(|t| !t.observation.contains("InfeasibleAction")), "{}", e.id);
                    assert!(e.valid && e.success == Some(true), "{d} size {size} budget {budget} {}: {}", e.id, e.task);
                }
            }
        }
    }
}
