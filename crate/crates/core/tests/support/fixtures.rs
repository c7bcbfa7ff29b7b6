//! Checks over the bundled reference fixtures.

use std::collections::BTreeMap;

use plansynth_core::emulator::TerminalReason;
use plansynth_core::env_model::{parse_environment, serialize_environment, Node, SceneGraph};
use plansynth_core::goals::PlacementPredicate;
use plansynth_core::plan_io::{parse_response, render_response};
use plansynth_core::scenario_gen::{parse_generation, GenConfig};
use plansynth_core::trace::{replay_trace, Trace};
use plansynth_core::{Dialect, Environment, GoalSpec, ObjectSetEnv, WorldState};
use serde_json::Value;

const EXAMPLE_GRAPH: &str = include_str!("../fixtures/example_graph.json");
const BOARDWALK: &str = include_str!("../fixtures/boardwalk_generation.json");
const LAMPPOST: &str = include_str!("../fixtures/lamppost_trace.json");
const HEATED_APPLE: &str = include_str!("../fixtures/heated_apple_record.json");
const SLICED_BREAD: &str = include_str!("../fixtures/sliced_bread_record.json");
const SAYCAN_SORT: &str = include_str!("../fixtures/saycan_sort.txt");

fn round_trips(dialect: Dialect, raw: &str) -> Vec<plansynth_core::ActionCall> {
    let r = parse_response(dialect, raw).unwrap_or_else(|e| panic!("{e}\n{raw}"));
    let canon = render_response(&r);
    let again = parse_response(dialect, &canon).unwrap();
    assert_eq!(again, r);
    assert_eq!(render_response(&again), canon);
    r.plan
}

fn boardwalk() -> Environment {
    let cfg = GenConfig { env_size: 25, n_tasks: 25, ..GenConfig::default() };
    parse_generation(BOARDWALK, &cfg).unwrap().environment
}

pub fn example_graph_round_trips() {
    let env = parse_environment(EXAMPLE_GRAPH).unwrap();
    assert!(env.validate().is_empty());
    let back = parse_environment(&serialize_environment(&env)).unwrap();
    assert_eq!(back, env);
    assert_eq!(env.size(), 11);
}

pub fn boardwalk_generation_round_trips() {
    let env = boardwalk();
    let g = env.as_scene_graph().unwrap();
    assert_eq!((g.regions.len(), g.objects.len()), (20, 9));
    assert!(env.validate().is_empty());
    assert_eq!(parse_environment(&serialize_environment(&env)).unwrap(), env);
}

fn lamppost_start() -> WorldState {
    let full = boardwalk();
    let g = full.as_scene_graph().unwrap();
    let pick = |names: &[&str], from: &[Node]| -> Vec<Node> {
        names
            .iter()
            .map(|n| {
                let node = from.iter().find(|x| x.name == *n).unwrap();
                Node::new(node.name.clone(), node.coords)
            })
            .collect()
    };
    let visible = Environment::SceneGraph(SceneGraph {
        regions: pick(&["boardwalk_1", "beach_2"], &g.regions),
        objects: pick(&["bench_2", "lamppost_1"], &g.objects),
        region_edges: vec![],
        object_edges: vec![],
        robot_location: "boardwalk_1".into(),
    });
    WorldState::from_parts(full, &visible, 10)
}

pub fn lamppost_trace_replays() {
    let trace: Trace = serde_json::from_str(LAMPPOST).unwrap();
    assert_eq!(trace.turns.len(), 4);
    for t in &trace.turns {
        round_trips(Dialect::Spine, &t.plan);
    }
    let (checks, end) = replay_trace(lamppost_start(), Dialect::Spine, &trace).unwrap();
    for c in &checks {
        assert!(c.matches(), "turn {}\nexpected {:#?}\nactual {:#?}", c.index, c.expected, c.actual);
    }
    assert_eq!(checks[1].executed.len(), 1);
    match end.terminal {
        Some(TerminalReason::Answered { message }) => assert!(message.contains("lamppost_1")),
        other => panic!("{other:?}"),
    }
    assert!(end.revealed.nodes.is_subset(&end.full.as_scene_graph().unwrap().node_names().map(String::from).collect()));
}

fn steps(v: &Value) -> String {
    v.as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect::<Vec<_>>().join(", ")
}

pub fn household_records_round_trip() {
    let apple: Value = serde_json::from_str(HEATED_APPLE).unwrap();
    let all = round_trips(Dialect::LlmPlanner, &steps(&apple["initial_high_level_plans"]));
    let done = round_trips(Dialect::LlmPlanner, &steps(&apple["completed_plans"]));
    assert_eq!(all.len(), 13);
    assert_eq!(&all[..done.len()], &done[..]);

    let bread: Value = serde_json::from_str(SLICED_BREAD).unwrap();
    let plan = round_trips(Dialect::LlmPlanner, &steps(&bread["Next Plans"]));
    assert_eq!(plan.len(), 7);
    assert_eq!(plan[2].render(), "SliceObject Bread");
}

pub fn saycan_sort_pair_satisfies_goal() {
    let mut lines = SAYCAN_SORT.lines();
    let objects: Vec<String> = lines
        .next()
        .unwrap()
        .trim_start_matches("objects = [")
        .trim_end_matches(']')
        .split(", ")
        .map(String::from)
        .collect();
    assert!(lines.next().unwrap().starts_with('#'));
    let program: Vec<&str> = lines.collect();
    let plan = round_trips(Dialect::SayCan, &program.join("\n"));
    assert_eq!(plan.len(), 4);

    let (bowls, blocks): (Vec<String>, Vec<String>) = objects.into_iter().partition(|o| o.ends_with("bowl"));
    let env = Environment::ObjectSet(ObjectSetEnv { objects: blocks, receptacles: bowls, placements: BTreeMap::new() });
    let mut s = WorldState::from_parts(env.clone(), &env, 10);
    for a in &plan {
        s = s.apply(a).unwrap().0;
    }
    let goal = GoalSpec::Placement { predicate: PlacementPredicate::EachBlockInMatchingBowl };
    assert!(goal.is_satisfied(&s, &plan));
}

pub const ALL: &[(&str, fn())] = &[
    ("example graph", example_graph_round_trips),
    ("boardwalk generation", boardwalk_generation_round_trips),
    ("lamppost trace", lamppost_trace_replays),
    ("household records", household_records_round_trip),
    ("tabletop sort", saycan_sort_pair_satisfies_goal),
];
