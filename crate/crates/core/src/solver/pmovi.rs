//! Pareto multi-objective value iteration.
//!
//! Each sweep replaces every state's vector set with the pruned union over
//! actions of `r(s, a) + γ Σ P(s'|s,a) v(s')`, taking every combination of
//! one vector per successor. Terminal states stay at the zero vector. All
//! sweeps are kept so that any front vector can be traced back to the
//! decisions that realise it.

use std::collections::BTreeMap;

use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::pareto::{cap_by_contribution, hausdorff, prune_by, ParetoSet};
use super::SolverError;
use crate::model::{probability_f64, ModelError, Probability, Scenario, StateVector};
use crate::value::ValueVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Discount factor in (0, 1].
    pub gamma: f64,
    /// Maximum number of sweeps; `None` iterates to convergence.
    pub horizon: Option<u32>,
    pub epsilon: f64,
    pub dedup: f64,
    /// Cap on vectors per state; 0 means unlimited.
    pub max_vectors: usize,
    /// Sweep budget when `horizon` is `None`.
    pub max_sweeps: u32,
}

pub const STOCHASTIC_VECTOR_CAP: usize = 16;

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            gamma: 1.0,
            horizon: Some(50),
            epsilon: 1e-9,
            dedup: 1e-9,
            max_vectors: 0,
            max_sweeps: 10_000,
        }
    }
}

impl SolveConfig {
    pub fn finite(gamma: f64, horizon: u32) -> Self {
        SolveConfig {
            gamma,
            horizon: Some(horizon),
            ..SolveConfig::default()
        }
    }

    /// Discounted, run to convergence.
    pub fn discounted(gamma: f64) -> Self {
        SolveConfig {
            gamma,
            horizon: None,
            ..SolveConfig::default()
        }
    }

    /// Defaults suited to `scenario`: exact for deterministic scenarios,
    /// capped at [`STOCHASTIC_VECTOR_CAP`] vectors per state otherwise,
    /// since exact stochastic fronts grow combinatorially with the horizon.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        SolveConfig {
            max_vectors: if scenario.is_stochastic() {
                STOCHASTIC_VECTOR_CAP
            } else {
                0
            },
            ..SolveConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |reason: &str| Err(SolverError::InvalidConfig(reason.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        match self.horizon {
            Some(0) => return bad("horizon must be positive"),
            None if self.gamma == 1.0 => return bad("gamma = 1 requires a finite horizon"),
            _ => {}
        }
        if !(self.epsilon >= 0.0) || !(self.dedup >= 0.0) {
            return bad("tolerances must be non-negative");
        }
        if self.horizon.is_none() && self.max_sweeps == 0 {
            return bad("max_sweeps must be positive");
        }
        Ok(())
    }

    fn sweep_limit(&self) -> u32 {
        self.horizon.unwrap_or(self.max_sweeps)
    }
}

/// One vector of a state's set, with the decision that realises it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontEntry {
    pub value: ValueVector,
    /// `None` for terminal states and the initial zero sweep.
    pub action: Option<usize>,
    /// `(successor state index, entry index in the previous sweep)`.
    pub successors: SmallVec<[(u32, u32); 2]>,
}

impl FrontEntry {
    fn zero(dim: usize) -> Self {
        FrontEntry {
            value: ValueVector::zeros(dim),
            action: None,
            successors: SmallVec::new(),
        }
    }
}

/// Per-state vector sets for every sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFront {
    pub(crate) scenario: String,
    pub(crate) scenario_hash: String,
    pub(crate) values: Vec<String>,
    pub(crate) actions: Vec<String>,
    pub(crate) config: SolveConfig,
    /// `layers[k][state]` is the vector set after `k` sweeps.
    pub(crate) layers: Vec<Vec<Vec<FrontEntry>>>,
    pub(crate) initial: usize,
    pub(crate) converged: bool,
    pub(crate) approximate: bool,
    pub(crate) residual: f64,
    pub(crate) states: Vec<StateVector>,
    pub(crate) transitions: Vec<StateKind>,
}

impl SolutionFront {
    pub fn scenario_name(&self) -> &str {
        &self.scenario
    }

    pub fn scenario_hash(&self) -> &str {
        &self.scenario_hash
    }

    pub fn value_names(&self) -> &[String] {
        &self.values
    }

    pub fn action_names(&self) -> &[String] {
        &self.actions
    }

    pub fn config(&self) -> &SolveConfig {
        &self.config
    }

    /// Number of sweeps performed.
    pub fn sweeps(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// True when some state hit the vector cap.
    pub fn approximate(&self) -> bool {
        self.approximate
    }

    /// Hausdorff distance between the last two sweeps.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn initial_index(&self) -> usize {
        self.initial
    }

    pub fn state_index(&self, state: &StateVector) -> Option<usize> {
        self.states.binary_search(state).ok()
    }

    pub fn entries(&self, state: usize) -> &[FrontEntry] {
        &self.layers[self.sweeps()][state]
    }

    pub(crate) fn layer_entries(&self, layer: usize, state: usize) -> &[FrontEntry] {
        &self.layers[layer][state]
    }

    pub(crate) fn layers(&self) -> &[Vec<Vec<FrontEntry>>] {
        &self.layers
    }

    /// Final vector set of the state at `index`.
    pub fn front_at(&self, index: usize) -> ParetoSet {
        ParetoSet::from_pruned(self.entries(index).iter().map(|e| e.value.clone()).collect())
    }

    pub fn front(&self, state: &StateVector) -> Option<ParetoSet> {
        self.state_index(state).map(|i| self.front_at(i))
    }

    pub fn initial_front(&self) -> ParetoSet {
        self.front_at(self.initial)
    }

    /// Decision options of the state at `index` as solved.
    pub fn transitions(&self, index: usize) -> &StateKind {
        &self.transitions[index]
    }

    pub(crate) fn transition(&self, state: usize, action: usize) -> Option<&Transition> {
        match &self.transitions[state] {
            StateKind::Live(rows) => rows.iter().find(|t| t.action == action),
            StateKind::Terminal => None,
        }
    }
}

/// One decision option of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub action: usize,
    pub reward: ValueVector,
    /// `(probability, successor state index)`, merged per successor.
    pub successors: Vec<(f64, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateKind {
    Terminal,
    Live(Vec<Transition>),
}

pub(crate) fn build_transitions<F>(scenario: &Scenario, allowed: &F) -> Result<Vec<StateKind>, ModelError>
where
    F: Fn(&StateVector) -> Result<Vec<usize>, ModelError> + Sync,
{
    (0..scenario.state_count())
        .into_par_iter()
        .map(|index| {
            let state = scenario.state_at(index);
            if scenario.is_terminal(&state)?.is_some() {
                return Ok(StateKind::Terminal);
            }
            let mut rows = Vec::new();
            for action in allowed(&state)? {
                let dist = scenario.successor_distribution_by_id(&state, action)?;
                let reward = dist.first().map(|(_, t)| t.alignment.clone()).unwrap_or_default();
                let mut merged: BTreeMap<u32, Probability> = BTreeMap::new();
                for (p, t) in &dist {
                    *merged
                        .entry(scenario.state_index(&t.next_state) as u32)
                        .or_insert_with(Probability::zero) += p;
                }
                rows.push(Transition {
                    action,
                    reward,
                    successors: merged.into_iter().map(|(s, p)| (probability_f64(&p), s)).collect(),
                });
            }
            Ok(StateKind::Live(rows))
        })
        .collect()
}

struct Backup<'a> {
    prev: &'a [Vec<FrontEntry>],
    gamma: f64,
    tau: f64,
    cap: usize,
    dim: usize,
}

impl Backup<'_> {
    fn state(&self, kind: &StateKind) -> (Vec<FrontEntry>, bool) {
        let rows = match kind {
            StateKind::Terminal => return (vec![FrontEntry::zero(self.dim)], false),
            StateKind::Live(rows) if rows.is_empty() => return (vec![FrontEntry::zero(self.dim)], false),
            StateKind::Live(rows) => rows,
        };
        let mut candidates = Vec::new();
        for row in rows {
            // partial expectations over the successors handled so far
            let mut partials: Vec<(ValueVector, SmallVec<[(u32, u32); 2]>)> =
                vec![(ValueVector::zeros(self.dim), SmallVec::new())];
            for &(p, next) in &row.successors {
                let options = &self.prev[next as usize];
                let mut grown = Vec::with_capacity(partials.len() * options.len());
                for (acc, choice) in &partials {
                    for (j, entry) in options.iter().enumerate() {
                        let mut c = choice.clone();
                        c.push((next, j as u32));
                        grown.push((acc.add_scaled(p, &entry.value), c));
                    }
                }
                partials = if row.successors.len() > 1 {
                    prune_by(grown, |(v, _)| v, self.tau)
                } else {
                    grown
                };
            }
            for (expectation, successors) in partials {
                candidates.push(FrontEntry {
                    value: row.reward.add_scaled(self.gamma, &expectation),
                    action: Some(row.action),
                    successors,
                });
            }
        }
        let pruned = prune_by(candidates, |e| &e.value, self.tau);
        let over = self.cap > 0 && pruned.len() > self.cap;
        (cap_by_contribution(pruned, self.cap, |e| &e.value), over)
    }
}

/// Solves the scenario over its applicable actions.
pub fn pmovi(scenario: &Scenario, config: &SolveConfig) -> Result<SolutionFront, SolverError> {
    pmovi_with(scenario, config, |state| scenario.available_action_ids(state))
}

/// Solves with the action set of each non-terminal state supplied by
/// `allowed`, e.g. a protocol restriction.
pub fn pmovi_with<F>(scenario: &Scenario, config: &SolveConfig, allowed: F) -> Result<SolutionFront, SolverError>
where
    F: Fn(&StateVector) -> Result<Vec<usize>, ModelError> + Sync,
{
    config.validate()?;
    let dim = scenario.values().len();
    let rows = build_transitions(scenario, &allowed)?;
    let n = rows.len();
    let mut layers: Vec<Vec<Vec<FrontEntry>>> = vec![vec![vec![FrontEntry::zero(dim)]; n]];
    let mut converged = false;
    let mut approximate = false;
    let mut residual = f64::INFINITY;
    for _ in 0..config.sweep_limit() {
        let prev = layers.last().expect("layer 0 exists");
        let backup = Backup {
            prev,
            gamma: config.gamma,
            tau: config.dedup,
            cap: config.max_vectors,
            dim,
        };
        let (next, capped): (Vec<Vec<FrontEntry>>, Vec<bool>) = rows.par_iter().map(|k| backup.state(k)).unzip();
        approximate |= capped.iter().any(|&c| c);
        residual = prev
            .par_iter()
            .zip(&next)
            .map(|(a, b)| hausdorff(a, b, |e| &e.value))
            .reduce(|| 0.0, f64::max);
        layers.push(next);
        if residual <= config.epsilon {
            converged = true;
            break;
        }
    }
    Ok(SolutionFront {
        scenario: scenario.name().to_string(),
        scenario_hash: scenario.content_hash().to_string(),
        values: scenario.value_names(),
        actions: scenario.actions().iter().map(|a| a.name.clone()).collect(),
        config: *config,
        layers,
        initial: scenario.state_index(scenario.initial_state()),
        converged,
        approximate,
        residual,
        states: scenario.enumerate_states(),
        transitions: rows,
    })
}
