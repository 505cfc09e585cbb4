//! Acceptance checks for the engine and the service.
//!
//! Each test prints one `PASS` or `FAIL` line straight to stderr, so the
//! lines survive output capture. Tests take a shared lock so wall-clock
//! limits are measured one at a time.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::Write;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use common::{episode_vectors, naive_front, random_scenario, same_set};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use valence_core::assessment::{score_trajectory, Episode, Trajectory, TrajectoryOutcome};
use valence_core::model::{Scenario, StateVector};
use valence_core::protocol::{evaluate_protocol, parse_protocol, validate_protocol, Protocol};
use valence_core::scenario::{builtin_firefight, builtin_firefight_stochastic, firefight_with_occupancy};
use valence_core::solver::{extract_policy, hypervolume, pareto_prune, pmovi, SolveConfig};
use valence_core::value::ValueVector;
use valence_service::{router, ActionRequest, CreateSession, SessionConfig, SessionManager, SessionView};

static LOCK: Mutex<()> = Mutex::new(());

fn criterion(id: u32, title: &str, limit: Duration, body: impl FnOnce() -> String) {
    let _guard = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let line = |verdict: &str, detail: &str| {
        format!(
            "{verdict} [{id:02}] {title}: {detail} ({:.3}s, limit {}s)\n",
            elapsed.as_secs_f64(),
            limit.as_secs()
        )
    };
    let mut err = std::io::stderr();
    match outcome {
        Ok(detail) if elapsed <= limit => {
            let _ = err.write_all(line("PASS", &detail).as_bytes());
        }
        Ok(detail) => {
            let _ = err.write_all(line("FAIL", &format!("over the time limit; {detail}")).as_bytes());
            panic!("criterion {id} took {elapsed:?}, limit {limit:?}");
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            let _ = err.write_all(line("FAIL", message.lines().next().unwrap_or("")).as_bytes());
            resume_unwind(panic);
        }
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn levels(st: &StateVector) -> [u16; 5] {
    let l = st.levels();
    [l[0], l[1], l[2], l[3], l[4]]
}

#[test]
fn state_space_count() {
    criterion(1, "state space count", secs(1), || {
        let s = builtin_firefight();
        let states = s.enumerate_states();
        assert_eq!(states.len(), 400);
        "400 states".into()
    });
}

#[test]
fn alignment_table_fidelity() {
    criterion(2, "alignment table fidelity", secs(1), || {
        let s = builtin_firefight();
        let states = s.enumerate_states();
        // (value, action, condition on [fire, occupancy, equipment, knowledge, health], score)
        type Cond = fn(&[u16; 5]) -> bool;
        let cells: Vec<(&str, &str, Cond, f64)> = vec![
            (
                "Professionalism",
                "EvacuateOccupants",
                |l| l[0] == 0 && l[3] == 1 && l[1] > 0,
                1.0,
            ),
            (
                "Professionalism",
                "EvacuateOccupants",
                |l| l[0] == 4 && l[3] == 0 && l[1] > 0,
                0.0,
            ),
            ("Professionalism", "EvacuateOccupants", |l| l[1] == 0, -1.0),
            ("Proximity", "EvacuateOccupants", |l| l[1] > 0, 1.0),
            ("Proximity", "EvacuateOccupants", |l| l[1] == 0, -1.0),
            ("Professionalism", "ContainFire", |l| l[0] > 0, 0.8),
            ("Professionalism", "ContainFire", |l| l[0] == 0, -1.0),
            ("Proximity", "ContainFire", |l| l[0] > 0, 0.2),
            ("Proximity", "ContainFire", |l| l[0] == 0, -1.0),
            (
                "Professionalism",
                "AggressiveFireSuppression",
                |l| l[0] > 0 && l[2] == 1,
                0.6,
            ),
            (
                "Professionalism",
                "AggressiveFireSuppression",
                |l| l[0] > 0 && l[2] == 0,
                0.3,
            ),
            ("Professionalism", "AggressiveFireSuppression", |l| l[0] == 0, -1.0),
            ("Proximity", "AggressiveFireSuppression", |l| l[0] > 0, 0.5),
            ("Proximity", "AggressiveFireSuppression", |l| l[0] == 0, -1.0),
            ("Professionalism", "PrepareEquipment", |l| l[2] == 0, 0.5),
            ("Professionalism", "PrepareEquipment", |l| l[2] == 1, -1.0),
            ("Proximity", "PrepareEquipment", |l| l[2] == 0, -0.1),
            ("Proximity", "PrepareEquipment", |l| l[2] == 1, -1.0),
            ("Professionalism", "UpdateKnowledge", |l| l[3] == 0, 1.0),
            ("Professionalism", "UpdateKnowledge", |l| l[3] == 1, -1.0),
            ("Proximity", "UpdateKnowledge", |l| l[3] == 0, -0.5),
            ("Proximity", "UpdateKnowledge", |l| l[3] == 1, -1.0),
        ];
        let mut checked = 0;
        for (value, action, cond, score) in &cells {
            let mut hits = 0;
            for st in states.iter().filter(|st| cond(&levels(st))) {
                assert_eq!(
                    s.alignment(value, st, action).unwrap(),
                    *score,
                    "{value} {action} {st:?}"
                );
                hits += 1;
            }
            assert!(hits > 0, "{value} {action} matched no state");
            checked += hits;
        }
        let mut sweep = 0;
        for st in &states {
            for action in s.actions() {
                for value in s.values() {
                    let x = s.alignment(&value.name, st, &action.name).unwrap();
                    assert!((-1.0..=1.0).contains(&x), "{x} out of range");
                    sweep += 1;
                }
            }
        }
        assert_eq!(sweep, 4000);
        format!(
            "{} cells over {checked} state checks exact, {sweep} scores in range",
            cells.len()
        )
    });
}

/// Next state of the built-in rules, written out by hand.
fn expected_next(l: [u16; 5], action: &str) -> [u16; 5] {
    let [fire, occ, equip, know, health] = l;
    let penalty = u16::from(know == 0 || equip == 0) + u16::from(fire >= 2);
    match action {
        "EvacuateOccupants" => [
            fire,
            occ.saturating_sub(1),
            if fire == 4 { 0 } else { equip },
            know,
            health.saturating_sub(penalty),
        ],
        "ContainFire" => [fire.saturating_sub(1), occ, equip, know, health],
        "AggressiveFireSuppression" => [
            fire.saturating_sub(2),
            occ,
            if fire == 4 { 0 } else { equip },
            know,
            health.saturating_sub(penalty),
        ],
        "PrepareEquipment" => [fire, occ, 1, know, health],
        "UpdateKnowledge" => [fire, occ, equip, 1, health],
        other => panic!("unknown action {other}"),
    }
}

#[test]
fn transition_fidelity() {
    criterion(3, "transition fidelity", secs(5), || {
        let s = builtin_firefight();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let init = s.initial_state().clone();
        assert_eq!(levels(&init), [2, 4, 0, 0, 3]);

        let t = s.step(&init, "PrepareEquipment", &mut rng).unwrap();
        assert_eq!(levels(&t.next_state), [2, 4, 1, 0, 3]);
        assert_eq!(t.alignment.as_slice(), [0.5, -0.1]);
        let t = s.step(&init, "EvacuateOccupants", &mut rng).unwrap();
        assert_eq!(levels(&t.next_state), [2, 3, 0, 0, 1]);
        let mut severe = 0;
        for st in s.enumerate_states() {
            let l = levels(&st);
            if l[0] == 4 && s.is_terminal(&st).unwrap().is_none() {
                let t = s.step(&st, "EvacuateOccupants", &mut rng).unwrap();
                assert_eq!(t.next_state.level(2), 0);
                severe += 1;
            }
        }

        let sizes: Vec<usize> = s.variables().iter().map(|v| v.levels.len()).collect();
        let mut pairs = 0;
        for st in s.enumerate_states() {
            let live = s.is_terminal(&st).unwrap().is_none();
            for action in s.actions() {
                let result = s.step(&st, &action.name, &mut rng);
                if !live {
                    assert!(result.is_err());
                    continue;
                }
                let t = result.unwrap();
                for (level, size) in t.next_state.levels().iter().zip(&sizes) {
                    assert!(usize::from(*level) < *size);
                }
                assert_eq!(
                    levels(&t.next_state),
                    expected_next(levels(&st), &action.name),
                    "{st:?} {}",
                    action.name
                );
                pairs += 1;
            }
        }
        format!("3 rule examples exact ({severe} severe states), {pairs} live pairs clamp as expected")
    });
}

#[test]
fn solver_oracle_equivalence() {
    criterion(4, "solver-oracle equivalence", secs(120), || {
        let s = firefight_with_occupancy(2);
        let sol = pmovi(&s, &SolveConfig::finite(1.0, 8)).unwrap();
        let oracle = naive_front(
            episode_vectors(&s, s.initial_state(), 8, 1.0, true, |st| {
                s.available_action_ids(st).unwrap()
            }),
            1e-9,
        );
        let front = sol.initial_front();
        assert!(same_set(front.vectors(), &oracle, 1e-9), "reduced scenario differs");
        let reduced = front.len();

        let mut sizes = Vec::new();
        for seed in 0..50u64 {
            let r = random_scenario(1000 + seed);
            let h = 1 + (seed % 10) as u32;
            assert!(r.enumerate_states().len() <= 200 && r.actions().len() <= 4);
            let sol = pmovi(&r, &SolveConfig::finite(1.0, h)).unwrap();
            let oracle = naive_front(
                episode_vectors(&r, r.initial_state(), h, 1.0, true, |st| {
                    r.available_action_ids(st).unwrap()
                }),
                1e-9,
            );
            assert!(
                same_set(sol.initial_front().vectors(), &oracle, 1e-9),
                "random scenario {seed} at H={h} differs"
            );
            sizes.push(oracle.len());
        }
        format!(
            "reduced front of {reduced} matches; 50 random scenarios match (front sizes {}..={})",
            sizes.iter().min().unwrap(),
            sizes.iter().max().unwrap()
        )
    });
}

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/firefight-h50.front.json");

#[test]
fn full_scale_solve() {
    criterion(5, "full-scale solve", secs(60), || {
        let s = Arc::new(builtin_firefight());
        let config = SolveConfig::finite(1.0, 50);
        let sol = pmovi(&s, &config).unwrap();
        let front = sol.initial_front();
        let recorded = json!({
            "scenario": s.name(),
            "scenario_hash": s.content_hash(),
            "gamma": 1.0,
            "horizon": 50,
            "front": front.iter().map(|v| v.to_vec()).collect::<Vec<_>>(),
        });
        if std::env::var_os("VALENCE_BLESS").is_some() {
            std::fs::write(GOLDEN, serde_json::to_string_pretty(&recorded).unwrap() + "\n").unwrap();
        }
        let golden: Value = serde_json::from_str(&std::fs::read_to_string(GOLDEN).expect("golden fixture")).unwrap();
        assert_eq!(golden["scenario_hash"], recorded["scenario_hash"]);
        let golden: Vec<ValueVector> = serde_json::from_value::<Vec<Vec<f64>>>(golden["front"].clone())
            .unwrap()
            .into_iter()
            .map(ValueVector::from)
            .collect();
        assert!(
            same_set(front.vectors(), &golden, 1e-9),
            "front drifted from the golden fixture"
        );

        for target in front.iter() {
            let trace = extract_policy(&sol, s.initial_state(), target).unwrap();
            let mut ep = Episode::new(s.clone(), 0, 1.0, Some(50));
            for a in trace.actions() {
                ep.apply(a).unwrap();
            }
            let score = score_trajectory(&s, &ep.trajectory(), 1.0).unwrap();
            assert!(
                score.cumulative.chebyshev(target) <= 1e-9,
                "{target} replays to {}",
                score.cumulative
            );
        }
        format!("{} front vectors match the fixture and replay within 1e-9", front.len())
    });
}

fn random_walk(s: &Arc<Scenario>, rng: &mut ChaCha8Rng) -> Trajectory {
    let mut ep = Episode::new(s.clone(), rng.random(), 1.0, Some(50));
    let len = rng.random_range(0..=50);
    for _ in 0..len {
        let options = ep.available_actions();
        if options.is_empty() {
            break;
        }
        let a = options[rng.random_range(0..options.len())].to_string();
        ep.apply(&a).unwrap();
    }
    ep.trajectory()
}

#[test]
fn trajectory_scoring() {
    criterion(6, "trajectory scoring", secs(30), || {
        let s = Arc::new(builtin_firefight());
        let mut ep = Episode::new(s.clone(), 0, 1.0, Some(50));
        ep.apply("PrepareEquipment").unwrap();
        ep.apply("UpdateKnowledge").unwrap();
        let score = score_trajectory(&s, &ep.trajectory(), 1.0).unwrap();
        assert_eq!(score.cumulative.as_slice(), [1.5, -0.6]);

        let stochastic = Arc::new(builtin_firefight_stochastic());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for i in 0..1000 {
            let scenario = if i % 2 == 0 { &s } else { &stochastic };
            let t = random_walk(scenario, &mut rng);
            let k = rng.random_range(0..=t.steps.len());
            let mut prefix = t.clone();
            prefix.steps.truncate(k);
            if k < t.steps.len() {
                prefix.outcome = TrajectoryOutcome::Truncated;
            }
            let mut suffix = t.clone();
            suffix.steps = t.steps[k..].to_vec();
            suffix.steps.iter_mut().enumerate().for_each(|(j, st)| st.index = j);
            if suffix.steps.is_empty() {
                suffix.outcome = TrajectoryOutcome::Truncated;
            }
            let whole = score_trajectory(scenario, &t, 1.0).unwrap();
            let p = score_trajectory(scenario, &prefix, 1.0).unwrap();
            let q = score_trajectory(scenario, &suffix, 1.0).unwrap();
            assert_eq!(p.concat(&q).cumulative, whole.cumulative, "trajectory {i} split at {k}");
        }
        "scripted run scores (1.5, -0.6); additivity exact on 1000 trajectories".into()
    });
}

#[test]
fn dominance_soundness() {
    criterion(7, "dominance soundness", secs(60), || {
        let s = firefight_with_occupancy(2);
        let sol = pmovi(&s, &SolveConfig::finite(1.0, 8)).unwrap();
        let front = sol.initial_front();
        let all = episode_vectors(&s, s.initial_state(), 8, 1.0, false, |st| {
            s.available_action_ids(st).unwrap()
        });
        for v in &all {
            assert!(front.covers(v, 1e-9), "{v} escapes the front");
        }
        format!(
            "{} distinct trajectory scores all covered by {} front vectors",
            all.len(),
            front.len()
        )
    });
}

fn random_protocol(s: &Scenario, rng: &mut ChaCha8Rng) -> String {
    let vars = s.variables();
    let ops = ["==", "!=", ">=", "<", ">", "<="];
    let rules: Vec<Value> = (0..rng.random_range(1..=4))
        .map(|_| {
            let action = &s.actions()[rng.random_range(0..s.actions().len())].name;
            let modality = ["permit", "forbid", "oblige"][rng.random_range(0..3)];
            let mut rule = json!({"modality": modality, "action": action, "priority": rng.random_range(0..2)});
            if rng.random_bool(0.8) {
                let v = &vars[rng.random_range(0..vars.len())];
                let level = &v.levels[rng.random_range(0..v.levels.len())];
                rule["when"] = json!(format!("{} {} {}", v.name, ops[rng.random_range(0..ops.len())], level));
            }
            rule
        })
        .collect();
    let stance = if rng.random_bool(0.3) {
        "restrictive"
    } else {
        "permissive"
    };
    json!({"format_version": 1, "name": "random", "stance": stance, "rules": rules}).to_string()
}

#[test]
fn protocol_restriction_soundness() {
    criterion(8, "protocol restriction soundness", secs(60), || {
        let s = firefight_with_occupancy(2);
        let config = SolveConfig::finite(1.0, 8);
        let empty = evaluate_protocol(&s, &Protocol::empty(&s), &config, None).unwrap();
        assert!(empty.relation.identical);
        assert_eq!(empty.front, empty.unrestricted_front);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mut accepted, mut tried) = (0, 0);
        let mut lost = 0;
        while accepted < 20 {
            tried += 1;
            assert!(tried < 10_000, "could not draw 20 valid protocols");
            let text = random_protocol(&s, &mut rng);
            let Ok(parsed) = parse_protocol(&text, &s) else {
                continue;
            };
            let p = parsed.value;
            if validate_protocol(&s, &p).iter().any(|d| d.is_error()) {
                continue;
            }
            accepted += 1;
            let eval = evaluate_protocol(&s, &p, &config, None).unwrap();
            for v in &eval.front {
                assert!(
                    eval.unrestricted_front.iter().any(|u| v.covered_by(u, 1e-9)),
                    "{v} not covered, protocol {text}"
                );
            }
            assert!(eval.relation.uncovered.is_empty());
            let oracle = naive_front(
                episode_vectors(&s, s.initial_state(), 8, 1.0, true, |st| {
                    p.allowed_action_ids(&s, st).unwrap()
                }),
                1e-9,
            );
            assert!(
                same_set(&eval.front, &oracle, 1e-9),
                "restricted front disagrees with oracle: {text}"
            );
            lost += usize::from(!eval.relation.identical);
        }
        format!("empty protocol identical; 20 of {tried} drawn protocols valid and covered ({lost} strictly restrict)")
    });
}

/// Exact hypervolume by inclusion and exclusion over subsets.
fn inclusion_exclusion(points: &[ValueVector], reference: &ValueVector) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for mask in 1u32..(1 << n) {
        let members: Vec<&ValueVector> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| &points[i]).collect();
        let volume: f64 = (0..reference.len())
            .map(|d| members.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min) - reference[d])
            .product();
        total += if members.len() % 2 == 1 { volume } else { -volume };
    }
    total
}

#[test]
fn hypervolume_indicator() {
    criterion(9, "hypervolume", secs(10), || {
        let corners = pareto_prune(
            &[ValueVector::from(vec![1.0, 0.0]), ValueVector::from(vec![0.0, 1.0])],
            0.0,
        )
        .unwrap();
        let hv = hypervolume(&corners, &ValueVector::from(vec![-1.0, -1.0])).unwrap();
        assert_eq!(hv, 3.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..500 {
            let dim = rng.random_range(2..=3);
            let reference = ValueVector::from(vec![-1.0; dim]);
            let point =
                |rng: &mut ChaCha8Rng| -> ValueVector { (0..dim).map(|_| rng.random_range(-0.9..1.0)).collect() };
            let base: Vec<ValueVector> = (0..rng.random_range(1..=7)).map(|_| point(&mut rng)).collect();
            let front = pareto_prune(&base, 0.0).unwrap();
            let mut grown = base.clone();
            grown.push(point(&mut rng));
            let bigger = pareto_prune(&grown, 0.0).unwrap();
            let a = hypervolume(&front, &reference).unwrap();
            let b = hypervolume(&bigger, &reference).unwrap();
            assert!(b >= a - 1e-12, "front {i}: adding a point shrank {a} to {b}");
            let exact = inclusion_exclusion(front.vectors(), &reference);
            assert!((a - exact).abs() <= 1e-9 * exact.max(1.0), "front {i}: {a} vs {exact}");
        }
        "{(1,0),(0,1)} against (-1,-1) is 3.0; 500 random fronts monotone and exact".into()
    });
}

fn view_text(manager: &SessionManager, id: &str) -> String {
    serde_json::to_string(&manager.view(id).unwrap()).unwrap()
}

/// Records of kind created or action among the complete lines of `bytes`.
fn committed(bytes: &[u8]) -> usize {
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    bytes[..complete]
        .split_inclusive(|&b| b == b'\n')
        .filter(|line| {
            let v: Value = serde_json::from_slice(line).unwrap();
            v["kind"] == "created" || v["kind"] == "action"
        })
        .count()
}

fn without_clock(view: &SessionView) -> Value {
    let mut v = serde_json::to_value(view).unwrap();
    v.as_object_mut().unwrap().remove("updated_at");
    v
}

fn crash_replay() -> String {
    let source = tempfile::tempdir().unwrap();
    let manager = SessionManager::open(source.path()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut ids = Vec::new();
    // per session: view text after k committed records, and the actions taken
    let mut snapshots: Vec<Vec<String>> = Vec::new();
    let mut actions: Vec<Vec<String>> = Vec::new();
    for i in 0..6 {
        let scenario = if i % 2 == 0 {
            "firefight-stochastic"
        } else {
            "firefight"
        };
        let view = manager
            .create(CreateSession {
                scenario: scenario.into(),
                seed: Some(rng.random_range(0..1000)),
                config: Some(SessionConfig {
                    gamma: 1.0,
                    horizon: 30,
                    reveal: rng.random_bool(0.5),
                }),
            })
            .unwrap();
        snapshots.push(vec![String::new(), serde_json::to_string(&view).unwrap()]);
        actions.push(Vec::new());
        ids.push(view.id);
    }
    let mut keys: Vec<(usize, String, String)> = Vec::new();
    for op in 0..400 {
        let s = rng.random_range(0..ids.len());
        let view = manager.view(&ids[s]).unwrap();
        if view.available_actions.is_empty() {
            continue;
        }
        let (action, key) = if !keys.is_empty() && rng.random_bool(0.1) {
            let (owner, action, key) = keys[rng.random_range(0..keys.len())].clone();
            if owner != s {
                continue;
            }
            (action, key)
        } else {
            let a = view.available_actions[rng.random_range(0..view.available_actions.len())].clone();
            (a.clone(), format!("op-{op}"))
        };
        let before = view.step_count;
        manager
            .apply(
                &ids[s],
                ActionRequest {
                    action: action.clone(),
                    idempotency_key: Some(key.clone()),
                    expected_step: None,
                },
            )
            .unwrap();
        if manager.view(&ids[s]).unwrap().step_count > before {
            keys.push((s, action.clone(), key));
            actions[s].push(action);
            snapshots[s].push(view_text(&manager, &ids[s]));
        }
    }
    let logs: Vec<Vec<u8>> = ids
        .iter()
        .map(|id| std::fs::read(source.path().join(format!("{id}.events.jsonl"))).unwrap())
        .collect();
    let total_steps: usize = actions.iter().map(Vec::len).sum();

    let mut recovered_sessions = 0;
    for crash in 0..100 {
        let dir = tempfile::tempdir().unwrap();
        let mut cuts = Vec::new();
        for (id, log) in ids.iter().zip(&logs) {
            let cut = if crash == 0 {
                log.len()
            } else {
                rng.random_range(0..=log.len())
            };
            std::fs::write(dir.path().join(format!("{id}.events.jsonl")), &log[..cut]).unwrap();
            cuts.push(committed(&log[..cut]));
        }
        let recovered = SessionManager::open(dir.path()).unwrap();
        for (s, id) in ids.iter().enumerate() {
            let k = cuts[s];
            if k == 0 {
                assert!(
                    recovered.view(id).is_err(),
                    "crash {crash}: empty log produced a session"
                );
                continue;
            }
            recovered_sessions += 1;
            assert_eq!(
                view_text(&recovered, id),
                snapshots[s][k],
                "crash {crash}, session {s}, {k} records"
            );
            // a second recovery sees the repaired log the same way
            let again = SessionManager::open(dir.path()).unwrap();
            assert_eq!(view_text(&again, id), snapshots[s][k]);
            drop(again);
            // and the random stream picks up where it stopped
            if let Some(next) = actions[s].get(k - 1) {
                recovered
                    .apply(
                        id,
                        ActionRequest {
                            action: next.clone(),
                            idempotency_key: None,
                            expected_step: Some(k - 1),
                        },
                    )
                    .unwrap();
                let expected: SessionView = serde_json::from_str(&snapshots[s][k + 1]).unwrap();
                assert_eq!(without_clock(&recovered.view(id).unwrap()), without_clock(&expected));
            }
        }
    }
    format!("{total_steps} steps over 6 sessions; 100 crash points, {recovered_sessions} session recoveries identical")
}

fn storm() -> String {
    let dir = tempfile::tempdir().unwrap();
    let manager = Arc::new(SessionManager::open(dir.path()).unwrap());
    let app = router(manager.clone());
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(8)
        .enable_all()
        .build()
        .unwrap();
    let horizon = 48;
    runtime.block_on(async {
        let id = manager
            .create(CreateSession {
                scenario: "firefight".into(),
                seed: Some(1),
                config: Some(SessionConfig {
                    gamma: 1.0,
                    horizon,
                    reveal: false,
                }),
            })
            .unwrap()
            .id;
        let barrier = Arc::new(tokio::sync::Barrier::new(16));
        let mut workers = Vec::new();
        for w in 0..16 {
            let (app, id, barrier) = (app.clone(), id.clone(), barrier.clone());
            workers.push(tokio::spawn(async move {
                barrier.wait().await;
                let (mut wins, mut conflicts) = (Vec::new(), 0);
                for attempt in 0.. {
                    let (_, view) = call(&app, "GET", &format!("/api/v1/sessions/{id}"), None).await;
                    if view["status"] == "finished" {
                        break;
                    }
                    let n = view["step_count"].as_u64().unwrap();
                    let action = if (w + attempt) % 2 == 0 {
                        "PrepareEquipment"
                    } else {
                        "UpdateKnowledge"
                    };
                    let body =
                        json!({"action": action, "expected_step": n, "idempotency_key": format!("{w}-{attempt}")});
                    let (status, reply) =
                        call(&app, "POST", &format!("/api/v1/sessions/{id}/actions"), Some(body)).await;
                    match status.as_u16() {
                        200 => {
                            assert_eq!(reply["step"]["index"].as_u64(), Some(n));
                            wins.push(n);
                        }
                        409 => {
                            assert!(
                                reply["code"] == "stale-step" || reply["code"] == "session-finished",
                                "{reply}"
                            );
                            conflicts += 1;
                        }
                        other => panic!("unexpected {other}: {reply}"),
                    }
                }
                (wins, conflicts)
            }));
        }
        let mut wins = Vec::new();
        let mut conflicts = 0;
        for w in workers {
            let (won, lost) = w.await.unwrap();
            wins.extend(won);
            conflicts += lost;
        }
        wins.sort_unstable();
        assert_eq!(wins, (0..u64::from(horizon)).collect::<Vec<_>>(), "one winner per step");
        let view = manager.view(&id).unwrap();
        assert_eq!(view.step_count, horizon as usize);
        let log = std::fs::read_to_string(dir.path().join(format!("{id}.events.jsonl"))).unwrap();
        let seqs: Vec<u64> = log
            .lines()
            .map(|l| serde_json::from_str::<Value>(l).unwrap()["seq"].as_u64().unwrap())
            .collect();
        assert_eq!(seqs, (0..u64::from(horizon) + 2).collect::<Vec<_>>());

        // one burst without step guards: every request lands, none twice
        let id = manager
            .create(CreateSession {
                scenario: "firefight".into(),
                seed: Some(2),
                config: None,
            })
            .unwrap()
            .id;
        let burst: Vec<_> = (0..16)
            .map(|w| {
                let (app, id) = (app.clone(), id.clone());
                tokio::spawn(async move {
                    let body = json!({"action": "PrepareEquipment", "idempotency_key": format!("b{w}")});
                    call(&app, "POST", &format!("/api/v1/sessions/{id}/actions"), Some(body))
                        .await
                        .1["step"]["index"]
                        .as_u64()
                        .unwrap()
                })
            })
            .collect();
        let mut indices = Vec::new();
        for b in burst {
            indices.push(b.await.unwrap());
        }
        indices.sort_unstable();
        assert_eq!(indices, (0..16).collect::<Vec<_>>());

        // one key shared by all: a single step, identical bodies
        let id = manager
            .create(CreateSession {
                scenario: "firefight".into(),
                seed: Some(3),
                config: None,
            })
            .unwrap()
            .id;
        let same: Vec<_> = (0..16)
            .map(|_| {
                let (app, id) = (app.clone(), id.clone());
                tokio::spawn(async move {
                    let body = json!({"action": "ContainFire", "idempotency_key": "shared"});
                    call(&app, "POST", &format!("/api/v1/sessions/{id}/actions"), Some(body))
                        .await
                        .1
                        .to_string()
                })
            })
            .collect();
        let mut bodies = Vec::new();
        for b in same {
            bodies.push(b.await.unwrap());
        }
        assert!(bodies.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(manager.view(&id).unwrap().step_count, 1);
        format!("{horizon} steps, one winner each, {conflicts} stale submissions refused")
    })
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (axum::http::StatusCode, Value) {
    use http_body_util::BodyExt;
    use tower::ServiceExt;
    let request = axum::http::Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(axum::body::Body::empty, |b| axum::body::Body::from(b.to_string())))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[test]
fn service_durability_and_concurrency() {
    criterion(10, "service replay and concurrency", secs(120), || {
        let replay = crash_replay();
        let storm = storm();
        format!("{replay}; storm: {storm}")
    });
}
