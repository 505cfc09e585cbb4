use serde::{Deserialize, Serialize};

use super::pmovi::SolutionFront;
use super::SolverError;
use crate::model::StateVector;
use crate::value::ValueVector;

/// One decision of an extracted plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub depth: u32,
    /// Index of the step this one follows, `None` for the root.
    pub parent: Option<usize>,
    /// Probability of reaching this step from its parent.
    pub probability: f64,
    pub state: StateVector,
    pub action: String,
    /// Value-to-go promised at this step.
    pub expected: ValueVector,
}

/// A plan realising one front vector from a start state.
///
/// For deterministic scenarios `steps` is a single chain. Stochastic
/// scenarios yield a tree of contingent decisions in breadth-first order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTrace {
    pub start: StateVector,
    pub target: ValueVector,
    pub steps: Vec<PlanStep>,
    pub branching: bool,
}

impl PolicyTrace {
    /// Action names along a deterministic chain.
    pub fn actions(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.action.as_str()).collect()
    }
}

/// Follows provenance links from `(start, target)` down to the zero sweep.
pub fn extract_policy(
    solution: &SolutionFront,
    start: &StateVector,
    target: &ValueVector,
) -> Result<PolicyTrace, SolverError> {
    let start_index = solution
        .state_index(start)
        .ok_or_else(|| SolverError::UnknownState(format!("{:?}", start.levels())))?;
    let top = solution.sweeps();
    let entries = solution.layer_entries(top, start_index);
    let (best, distance) = entries
        .iter()
        .enumerate()
        .map(|(i, e)| (i, e.value.chebyshev(target)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(SolverError::EmptyFront)?;
    if distance > solution.config().dedup {
        return Err(SolverError::NotOnFront {
            target: target.clone(),
            nearest: entries[best].value.clone(),
        });
    }

    let mut steps = Vec::new();
    let mut branching = false;
    // (layer, state, entry, parent step, probability from parent)
    let mut queue = std::collections::VecDeque::from([(top, start_index, best, None, 1.0)]);
    while let Some((layer, state, entry_index, parent, probability)) = queue.pop_front() {
        let entry = &solution.layer_entries(layer, state)[entry_index];
        let Some(action) = entry.action else {
            continue;
        };
        let id = steps.len();
        steps.push(PlanStep {
            depth: (top - layer) as u32,
            parent,
            probability,
            state: solution.states()[state].clone(),
            action: solution.action_names()[action].clone(),
            expected: entry.value.clone(),
        });
        if entry.successors.len() > 1 {
            branching = true;
        }
        let probabilities = successor_probabilities(solution, state, action, &entry.successors);
        for (&(next, index), p) in entry.successors.iter().zip(probabilities) {
            queue.push_back((layer - 1, next as usize, index as usize, Some(id), p));
        }
    }
    Ok(PolicyTrace {
        start: start.clone(),
        target: target.clone(),
        steps,
        branching,
    })
}

fn successor_probabilities(
    solution: &SolutionFront,
    state: usize,
    action: usize,
    successors: &[(u32, u32)],
) -> Vec<f64> {
    let Some(transition) = solution.transition(state, action) else {
        return vec![1.0; successors.len()];
    };
    successors
        .iter()
        .map(|(next, _)| {
            transition
                .successors
                .iter()
                .find(|(_, s)| s == next)
                .map_or(0.0, |(p, _)| *p)
        })
        .collect()
}
