use std::collections::{BTreeMap, BTreeSet, VecDeque};

use precritic::generate::{generate_world, Family, GenParams};
use precritic::world::{Action, EnvState, World};
use precritic::Error;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = (u64, GenParams)> {
    (any::<u64>(), 3usize..16, 1usize..4, 0.0f64..0.6, any::<bool>(), 1usize..4).prop_map(
        |(seed, screens, branching, trap_prob, web, tasks)| {
            let family = if web { Family::Web } else { Family::Mobile };
            (seed, GenParams { family, screens, branching, trap_prob, tasks, min_task_len: 2 })
        },
    )
}

fn generated(seed: u64, p: &GenParams) -> Option<World> {
    match generate_world(seed, p) {
        Ok(w) => Some(w),
        Err(Error::Generation { .. }) => None,
        Err(e) => panic!("unexpected error {e}"),
    }
}

/// Navigation distance to the nearest goal screen by forward BFS from every
/// screen, computed straight from the edge list.
fn brute_distances(w: &World, task: &str) -> BTreeMap<String, Option<u32>> {
    let goals: BTreeSet<&str> = w.task(task).unwrap().goal.iter().map(String::as_str).collect();
    let mut out = BTreeMap::new();
    for s in w.screens() {
        let mut seen = BTreeSet::from([s.id.as_str()]);
        let mut q = VecDeque::from([(s.id.as_str(), 0u32)]);
        let mut found = None;
        while let Some((at, d)) = q.pop_front() {
            if goals.contains(at) {
                found = Some(d);
                break;
            }
            for e in w.edges().iter().filter(|e| e.from == at) {
                if seen.insert(e.to.as_str()) {
                    q.push_back((e.to.as_str(), d + 1));
                }
            }
        }
        out.insert(s.id.clone(), found);
    }
    out
}

fn state_at(task: &str, screen: &str) -> EnvState {
    EnvState { task: task.into(), screen: screen.into(), history: vec![], step_count: 0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generation_is_reproducible((seed, p) in params()) {
        let a = generated(seed, &p);
        let b = generated(seed, &p);
        prop_assert_eq!(a.map(|w| w.to_json()), b.map(|w| w.to_json()));
    }

    #[test]
    fn generated_worlds_satisfy_their_contract((seed, p) in params()) {
        let Some(w) = generated(seed, &p) else { return Ok(()) };
        prop_assert_eq!(w.tasks().len(), p.tasks);
        if p.trap_prob > 0.0 {
            prop_assert!(w.irreversible_edge_count() > 0);
        } else {
            prop_assert_eq!(w.irreversible_edge_count(), 0);
        }
        for t in w.tasks() {
            prop_assert!(w.distance_to_goal(&w.initial_state(&t.id).unwrap()).is_some());
        }
        // serialization round trip
        let back = World::from_json_str("copy", &w.to_json()).unwrap();
        prop_assert_eq!(back.to_json(), w.to_json());
    }

    #[test]
    fn step_is_deterministic((seed, p) in params()) {
        let Some(w) = generated(seed, &p) else { return Ok(()) };
        let task = &w.tasks()[0].id;
        for s in w.screens() {
            let state = state_at(task, &s.id);
            for a in w.available_actions(&state) {
                prop_assert_eq!(w.step(&state, &a), w.step(&state, &a));
            }
        }
    }

    #[test]
    fn bfs_oracle_matches_brute_force((seed, p) in params()) {
        let Some(w) = generated(seed, &p) else { return Ok(()) };
        for t in w.tasks() {
            let brute = brute_distances(&w, &t.id);
            for s in w.screens() {
                let state = state_at(&t.id, &s.id);
                let d = w.distance_to_goal(&state);
                prop_assert_eq!(d, brute[&s.id].map(|n| n + 1), "screen {}", s.id);
                let Some(d) = d else {
                    prop_assert!(w.optimal_actions(&state).is_err());
                    continue;
                };
                let optimal = w.optimal_actions(&state).unwrap();
                prop_assert!(!optimal.is_empty());
                for a in w.available_actions(&state) {
                    let next = w.distance_to_goal(&w.step(&state, &a).state);
                    if optimal.contains(&a) {
                        prop_assert_eq!(next, Some(d - 1), "optimal {} at {}", a, s.id);
                    } else {
                        prop_assert!(next.is_none_or(|n| n >= d), "{} at {} reduced distance", a, s.id);
                    }
                }
            }
        }
    }

    #[test]
    fn dead_states_never_reach_a_goal((seed, p) in params()) {
        let Some(w) = generated(seed, &p) else { return Ok(()) };
        for t in w.tasks() {
            for s in w.screens() {
                if w.distance_to_goal(&state_at(&t.id, &s.id)).is_none() {
                    let reach = w.reachable_from(&s.id);
                    prop_assert!(t.goal.iter().all(|g| !reach.contains(g)));
                }
            }
        }
    }
}

#[test]
fn premature_done_kills_the_episode() {
    let w = generate_world(5, &GenParams::default()).unwrap();
    let t = &w.tasks()[0];
    let s = w.initial_state(&t.id).unwrap();
    let done = w.step(&s, &Action::done()).state;
    assert!(done.is_terminal());
    assert_eq!(w.distance_to_goal(&done), None);
    assert!(!w.is_success(&done));
}
