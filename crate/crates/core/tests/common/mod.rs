#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use valence_core::model::{Scenario, StateVector};
use valence_core::scenario::parse_scenario;
use valence_core::value::ValueVector;

pub fn state(scenario: &Scenario, levels: &[(&str, &str)]) -> StateVector {
    scenario
        .state_from_names(levels.iter().copied())
        .unwrap_or_else(|| panic!("bad state {levels:?}"))
}

/// Every state of `scenario` whose named variables take the given levels.
pub fn states_where(scenario: &Scenario, fixed: &[(&str, &str)]) -> Vec<StateVector> {
    scenario
        .enumerate_states()
        .into_iter()
        .filter(|s| {
            let named: Vec<(&str, &str)> = scenario.describe_state(s).collect();
            fixed.iter().all(|f| named.contains(f))
        })
        .collect()
}

/// Keeps the vectors not weakly dominated by another one, quadratic and
/// order independent. Near-duplicates within `tol` collapse.
pub fn naive_front(mut points: Vec<ValueVector>, tol: f64) -> Vec<ValueVector> {
    let mut out: Vec<ValueVector> = Vec::new();
    points.sort_by(|a, b| b.lex_cmp(a));
    'next: for p in points {
        for q in &out {
            if p.iter().zip(q.iter()).all(|(a, b)| *b >= a - tol) {
                continue 'next;
            }
        }
        out.retain(|q| !q.iter().zip(p.iter()).all(|(a, b)| *b >= a - tol));
        out.push(p);
    }
    out
}

pub fn same_set(a: &[ValueVector], b: &[ValueVector], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter().all(|x| b.iter().any(|y| x.chebyshev(y) <= tol))
        && b.iter().all(|y| a.iter().any(|x| x.chebyshev(y) <= tol))
}

fn key(v: &ValueVector) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Cumulative vectors of episodes from `start` that run until a terminal
/// state or exactly `horizon` steps, for a deterministic scenario.
///
/// Runs forward in time. Partial episodes standing in the same state at the
/// same depth share every continuation, so with `prune` set those whose
/// running sum is dominated by a sibling are dropped; without it only exact
/// duplicates merge and the result covers every episode.
pub fn episode_vectors<F>(
    scenario: &Scenario,
    start: &StateVector,
    horizon: u32,
    gamma: f64,
    prune: bool,
    allowed: F,
) -> Vec<ValueVector>
where
    F: Fn(&StateVector) -> Vec<usize>,
{
    let dim = scenario.values().len();
    let mut frontier: Vec<(StateVector, ValueVector)> = vec![(start.clone(), ValueVector::zeros(dim))];
    let mut finished: Vec<ValueVector> = Vec::new();
    let mut weight = 1.0;
    for depth in 0..=horizon {
        if prune {
            let mut by_state: BTreeMap<StateVector, Vec<ValueVector>> = BTreeMap::new();
            for (s, acc) in frontier {
                by_state.entry(s).or_default().push(acc);
            }
            frontier = by_state
                .into_iter()
                .flat_map(|(s, accs)| naive_front(accs, 0.0).into_iter().map(move |a| (s.clone(), a)))
                .collect();
        }
        let mut next: Vec<(StateVector, ValueVector)> = Vec::new();
        let mut seen: HashSet<(StateVector, Vec<u64>)> = HashSet::new();
        for (s, acc) in frontier {
            let actions = if scenario.is_terminal(&s).unwrap().is_some() || depth == horizon {
                Vec::new()
            } else {
                allowed(&s)
            };
            if actions.is_empty() {
                finished.push(acc);
                continue;
            }
            for a in actions {
                let dist = scenario.successor_distribution_by_id(&s, a).unwrap();
                assert_eq!(dist.len(), 1, "episode oracle needs deterministic actions");
                let t = &dist[0].1;
                let v = acc.add_scaled(weight, &t.alignment);
                if seen.insert((t.next_state.clone(), key(&v))) {
                    next.push((t.next_state.clone(), v));
                }
            }
        }
        frontier = next;
        weight *= gamma;
    }
    finished
}

/// Achievable expected vectors from `state` with `k` steps left, by plain
/// recursion over every contingent choice. Handles stochastic actions but
/// is exponential, so keep scenarios tiny.
pub fn policy_values(scenario: &Scenario, state: &StateVector, k: u32, gamma: f64) -> Vec<ValueVector> {
    let dim = scenario.values().len();
    if k == 0 || scenario.is_terminal(state).unwrap().is_some() {
        return vec![ValueVector::zeros(dim)];
    }
    let actions = scenario.available_action_ids(state).unwrap();
    if actions.is_empty() {
        return vec![ValueVector::zeros(dim)];
    }
    let mut out = Vec::new();
    for a in actions {
        let dist = scenario.successor_distribution_by_id(state, a).unwrap();
        let reward = dist[0].1.alignment.clone();
        // merge outcomes that land on the same state
        let mut branches: Vec<(f64, StateVector)> = Vec::new();
        for (p, t) in &dist {
            let p = *p.numer() as f64 / *p.denom() as f64;
            match branches.iter_mut().find(|(_, s)| *s == t.next_state) {
                Some(b) => b.0 += p,
                None => branches.push((p, t.next_state.clone())),
            }
        }
        let mut sums = vec![ValueVector::zeros(dim)];
        for (p, next) in branches {
            let options = naive_front(policy_values(scenario, &next, k - 1, gamma), 0.0);
            let mut grown = Vec::new();
            for s in &sums {
                for o in &options {
                    grown.push(s.add_scaled(p, o));
                }
            }
            sums = grown;
        }
        for s in sums {
            out.push(reward.add_scaled(gamma, &s));
        }
    }
    out
}

const SCORES: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

/// A random deterministic scenario: up to 200 states, up to 4 actions and
/// 2 or 3 values, with scores on a half-unit grid so sums stay exact.
pub fn random_scenario(seed: u64) -> Scenario {
    random_scenario_with(seed, false)
}

/// As [`random_scenario`], but actions may have two outcomes.
pub fn random_stochastic_scenario(seed: u64) -> Scenario {
    random_scenario_with(seed, true)
}

fn random_scenario_with(seed: u64, stochastic: bool) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let var_count = rng.random_range(1..=3usize);
    let mut sizes: Vec<usize> = Vec::new();
    let cap = if stochastic { 24 } else { 200 };
    for _ in 0..var_count {
        let room = cap / sizes.iter().product::<usize>().max(1);
        if room < 2 {
            break;
        }
        sizes.push(rng.random_range(2..=room.min(8)));
    }
    let names: Vec<String> = (0..sizes.len()).map(|i| format!("x{i}")).collect();
    let variables: Vec<Value> = names
        .iter()
        .zip(&sizes)
        .map(|(n, &k)| json!({"name": n, "levels": (0..k).map(|l| format!("L{l}")).collect::<Vec<_>>()}))
        .collect();
    let initial: serde_json::Map<String, Value> = names
        .iter()
        .zip(&sizes)
        .map(|(n, &k)| (n.clone(), json!(format!("L{}", rng.random_range(0..k)))))
        .collect();

    let guard = |rng: &mut ChaCha8Rng| -> String {
        let v = rng.random_range(0..sizes.len());
        let l = rng.random_range(0..sizes[v]);
        let op = ["==", "!=", ">=", "<"][rng.random_range(0..4)];
        format!("x{v} {op} {l}")
    };
    let effects = |rng: &mut ChaCha8Rng| -> Vec<Value> {
        let mut out = Vec::new();
        for _ in 0..rng.random_range(1..=2) {
            let v = rng.random_range(0..sizes.len());
            let assign = match rng.random_range(0..3) {
                0 => json!({"variable": names[v], "set": format!("L{}", rng.random_range(0..sizes[v]))}),
                1 => json!({"variable": names[v], "increment": rng.random_range(1..=2)}),
                _ => json!({"variable": names[v], "decrement": rng.random_range(1..=2)}),
            };
            let mut e = json!({"assign": [assign]});
            if rng.random_bool(0.4) {
                e["when"] = json!(guard(rng));
            }
            out.push(e);
        }
        out
    };

    let action_count = rng.random_range(1..=4usize);
    let actions: Vec<Value> = (0..action_count)
        .map(|i| {
            let outcomes = if stochastic && rng.random_bool(0.5) {
                let n = rng.random_range(1..=3);
                vec![
                    json!({"probability": format!("{n}/4"), "effects": effects(&mut rng)}),
                    json!({"probability": format!("{}/4", 4 - n), "effects": effects(&mut rng)}),
                ]
            } else {
                vec![json!({"probability": "1", "effects": effects(&mut rng)})]
            };
            json!({"name": format!("a{i}"), "outcomes": outcomes})
        })
        .collect();

    let value_count = rng.random_range(2..=3usize);
    let values: Vec<Value> = (0..value_count)
        .map(|v| {
            let rules: Vec<Value> = (0..action_count)
                .map(|a| {
                    let mut cases = Vec::new();
                    if rng.random_bool(0.6) {
                        cases.push(json!({"when": guard(&mut rng), "score": SCORES[rng.random_range(0..5)]}));
                    }
                    json!({"action": format!("a{a}"), "cases": cases, "default": SCORES[rng.random_range(0..5)]})
                })
                .collect();
            json!({"name": format!("v{v}"), "rules": rules})
        })
        .collect();

    let mut terminals = vec![json!({"when": guard(&mut rng), "label": "success"})];
    if rng.random_bool(0.5) {
        terminals.push(json!({"when": guard(&mut rng), "label": "failure"}));
    }

    let doc = json!({
        "format_version": 1,
        "name": format!("random-{seed}"),
        "variables": variables,
        "initial_state": initial,
        "actions": actions,
        "values": values,
        "terminals": terminals,
    });
    match parse_scenario(&doc.to_string()) {
        Ok(parsed) => parsed.value,
        Err(diags) => panic!("generated scenario {seed} is invalid: {diags:?}\n{doc:#}"),
    }
}
