//! Scenario semantics: states, guarded stochastic actions, terminal
//! conditions and per-value alignment of transitions.

use std::fmt;

use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{EvalError, Expr};
use crate::value::ValueVector;

/// Exact outcome probability.
pub type Probability = Ratio<i64>;

/// A scenario variable with an ordered, finite domain of named levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub levels: Vec<String>,
}

impl Variable {
    pub fn new<I, S>(name: impl Into<String>, levels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Variable {
            name: name.into(),
            levels: levels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }

    pub fn size(&self) -> usize {
        self.levels.len()
    }
}

/// One level index per scenario variable, in variable order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(Vec<u16>);

impl StateVector {
    pub fn new(levels: Vec<u16>) -> Self {
        StateVector(levels)
    }

    pub fn levels(&self) -> &[u16] {
        &self.0
    }

    pub fn level(&self, var: usize) -> u16 {
        self.0[var]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Update {
    Set(u16),
    Increment(u16),
    Decrement(u16),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub var: usize,
    pub update: Update,
}

/// Assignments applied when `guard` holds on the pre-state.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectRule {
    pub guard: Option<Expr>,
    pub assignments: Vec<Assignment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub probability: Probability,
    pub effects: Vec<EffectRule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub name: String,
    /// `None` means always applicable.
    pub applicable: Option<Expr>,
    pub outcomes: Vec<Outcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminalLabel {
    Success,
    Failure,
}

impl fmt::Display for TerminalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminalLabel::Success => "success",
            TerminalLabel::Failure => "failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalSpec {
    pub condition: Expr,
    pub label: TerminalLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreCase {
    pub guard: Option<Expr>,
    pub score: Expr,
}

/// Ordered score cases for one (value, action) pair. First match wins.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentRules {
    pub cases: Vec<ScoreCase>,
    pub default: f64,
}

/// An organisational value and its alignment rules, one set per action.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSpec {
    pub name: String,
    pub rules: Vec<AlignmentRules>,
}

/// Result of applying one action in one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionOutcome {
    pub next_state: StateVector,
    pub alignment: ValueVector,
    pub terminal: Option<TerminalLabel>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("unknown value `{0}`")]
    UnknownValue(String),
    #[error("state is terminal ({0}); no transitions leave it")]
    TerminalState(TerminalLabel),
    #[error("action `{0}` is not applicable in this state")]
    NotApplicable(String),
    #[error("state has {found} levels but the scenario has {expected} variables")]
    StateShape { expected: usize, found: usize },
    #[error("level {level} of `{variable}` is out of range")]
    LevelOutOfRange { variable: String, level: u16 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A validated scenario: the labelled transition system plus its values.
///
/// Instances come out of [`crate::scenario::parse_scenario`] (or the
/// built-ins) and are immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub(crate) name: String,
    pub(crate) description: Option<String>,
    pub(crate) variables: Vec<Variable>,
    pub(crate) initial: StateVector,
    pub(crate) actions: Vec<Action>,
    pub(crate) values: Vec<ValueSpec>,
    pub(crate) terminals: Vec<TerminalSpec>,
    pub(crate) hash: String,
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> Option<&str> {
        self.description.as_deref()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn initial_state(&self) -> &StateVector {
        &self.initial
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn values(&self) -> &[ValueSpec] {
        &self.values
    }

    pub fn value_names(&self) -> Vec<String> {
        self.values.iter().map(|v| v.name.clone()).collect()
    }

    /// True when some action has more than one outcome.
    pub fn is_stochastic(&self) -> bool {
        self.actions.iter().any(|a| a.outcomes.len() > 1)
    }

    pub fn terminals(&self) -> &[TerminalSpec] {
        &self.terminals
    }

    /// Hex SHA-256 of the canonical serialisation.
    pub fn content_hash(&self) -> &str {
        &self.hash
    }

    pub fn action_id(&self, name: &str) -> Result<usize, ModelError> {
        self.actions
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| ModelError::UnknownAction(name.to_string()))
    }

    pub fn action_name(&self, id: usize) -> &str {
        &self.actions[id].name
    }

    pub fn value_id(&self, name: &str) -> Result<usize, ModelError> {
        self.values
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| ModelError::UnknownValue(name.to_string()))
    }

    pub fn state_count(&self) -> usize {
        self.variables.iter().map(Variable::size).product()
    }

    /// Rank of `state` in [`Scenario::enumerate_states`] order.
    pub fn state_index(&self, state: &StateVector) -> usize {
        self.variables
            .iter()
            .zip(state.levels())
            .fold(0, |acc, (var, &level)| acc * var.size() + level as usize)
    }

    pub fn state_at(&self, mut index: usize) -> StateVector {
        let mut levels = vec![0u16; self.variables.len()];
        for (slot, var) in levels.iter_mut().zip(&self.variables).rev() {
            *slot = (index % var.size()) as u16;
            index /= var.size();
        }
        StateVector(levels)
    }

    /// Every state, as the Cartesian product of the domains in
    /// lexicographic order (first variable most significant).
    pub fn enumerate_states(&self) -> Vec<StateVector> {
        (0..self.state_count()).map(|i| self.state_at(i)).collect()
    }

    pub fn check_state(&self, state: &StateVector) -> Result<(), ModelError> {
        if state.len() != self.variables.len() {
            return Err(ModelError::StateShape {
                expected: self.variables.len(),
                found: state.len(),
            });
        }
        for (var, &level) in self.variables.iter().zip(state.levels()) {
            if level as usize >= var.size() {
                return Err(ModelError::LevelOutOfRange {
                    variable: var.name.clone(),
                    level,
                });
            }
        }
        Ok(())
    }

    /// Builds a state from level names, in any variable order.
    pub fn state_from_names<'a, I>(&self, levels: I) -> Option<StateVector>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut out: Vec<Option<u16>> = vec![None; self.variables.len()];
        for (var_name, level_name) in levels {
            let vi = self.variables.iter().position(|v| v.name == var_name)?;
            let li = self.variables[vi].level_index(level_name)?;
            out[vi] = Some(li as u16);
        }
        out.into_iter().collect::<Option<Vec<_>>>().map(StateVector)
    }

    /// `(variable, level)` name pairs for a state.
    pub fn describe_state<'a>(&'a self, state: &'a StateVector) -> impl Iterator<Item = (&'a str, &'a str)> {
        self.variables
            .iter()
            .zip(state.levels())
            .map(|(v, &l)| (v.name.as_str(), v.levels[l as usize].as_str()))
    }

    pub fn format_state(&self, state: &StateVector) -> String {
        let parts: Vec<String> = self.describe_state(state).map(|(v, l)| format!("{v}={l}")).collect();
        format!("({})", parts.join(", "))
    }

    /// Terminal label of a state. Failure wins when both kinds match.
    pub fn is_terminal(&self, state: &StateVector) -> Result<Option<TerminalLabel>, ModelError> {
        let mut success = false;
        for spec in &self.terminals {
            if spec.condition.eval_bool(state)? {
                match spec.label {
                    TerminalLabel::Failure => return Ok(Some(TerminalLabel::Failure)),
                    TerminalLabel::Success => success = true,
                }
            }
        }
        Ok(success.then_some(TerminalLabel::Success))
    }

    fn require_live(&self, state: &StateVector) -> Result<(), ModelError> {
        self.check_state(state)?;
        match self.is_terminal(state)? {
            Some(label) => Err(ModelError::TerminalState(label)),
            None => Ok(()),
        }
    }

    pub fn is_applicable(&self, state: &StateVector, action: usize) -> Result<bool, ModelError> {
        Ok(match &self.actions[action].applicable {
            Some(guard) => guard.eval_bool(state)?,
            None => true,
        })
    }

    /// Ids of the actions applicable in a non-terminal state.
    pub fn available_action_ids(&self, state: &StateVector) -> Result<Vec<usize>, ModelError> {
        self.require_live(state)?;
        let mut out = Vec::with_capacity(self.actions.len());
        for id in 0..self.actions.len() {
            if self.is_applicable(state, id)? {
                out.push(id);
            }
        }
        Ok(out)
    }

    pub fn available_actions(&self, state: &StateVector) -> Result<Vec<&str>, ModelError> {
        Ok(self
            .available_action_ids(state)?
            .into_iter()
            .map(|id| self.actions[id].name.as_str())
            .collect())
    }

    /// Score of one value for `(state, action)`, clamped to `[-1, 1]`.
    pub fn alignment_by_id(&self, value: usize, state: &StateVector, action: usize) -> Result<f64, ModelError> {
        let rules = &self.values[value].rules[action];
        for case in &rules.cases {
            let hit = match &case.guard {
                Some(guard) => guard.eval_bool(state)?,
                None => true,
            };
            if hit {
                return Ok(case.score.eval_number(state)?.clamp(-1.0, 1.0));
            }
        }
        Ok(rules.default.clamp(-1.0, 1.0))
    }

    pub fn alignment(&self, value: &str, state: &StateVector, action: &str) -> Result<f64, ModelError> {
        let value = self.value_id(value)?;
        let action = self.action_id(action)?;
        self.check_state(state)?;
        self.alignment_by_id(value, state, action)
    }

    /// All value scores for `(state, action)`, in value order.
    pub fn alignment_vector(&self, state: &StateVector, action: usize) -> Result<ValueVector, ModelError> {
        (0..self.values.len())
            .map(|v| self.alignment_by_id(v, state, action))
            .collect()
    }

    /// Applies one outcome's effect rules. Guards read the pre-state;
    /// assignments compose in listed order and clamp to the domain.
    pub fn apply_effects(&self, state: &StateVector, effects: &[EffectRule]) -> Result<StateVector, ModelError> {
        let mut next = state.0.clone();
        for rule in effects {
            let fires = match &rule.guard {
                Some(guard) => guard.eval_bool(state)?,
                None => true,
            };
            if !fires {
                continue;
            }
            for assignment in &rule.assignments {
                let max = (self.variables[assignment.var].size() - 1) as u16;
                let slot = &mut next[assignment.var];
                *slot = match assignment.update {
                    Update::Set(level) => level.min(max),
                    Update::Increment(k) => slot.saturating_add(k).min(max),
                    Update::Decrement(k) => slot.saturating_sub(k),
                };
            }
        }
        Ok(StateVector(next))
    }

    fn check_step(&self, state: &StateVector, action: usize) -> Result<(), ModelError> {
        self.require_live(state)?;
        if !self.is_applicable(state, action)? {
            return Err(ModelError::NotApplicable(self.actions[action].name.clone()));
        }
        Ok(())
    }

    /// Every outcome of `(state, action)` with its exact probability, in
    /// declaration order.
    pub fn successor_distribution_by_id(
        &self,
        state: &StateVector,
        action: usize,
    ) -> Result<Vec<(Probability, TransitionOutcome)>, ModelError> {
        self.check_step(state, action)?;
        let alignment = self.alignment_vector(state, action)?;
        self.actions[action]
            .outcomes
            .iter()
            .map(|outcome| {
                let next_state = self.apply_effects(state, &outcome.effects)?;
                let terminal = self.is_terminal(&next_state)?;
                Ok((
                    outcome.probability,
                    TransitionOutcome {
                        next_state,
                        alignment: alignment.clone(),
                        terminal,
                    },
                ))
            })
            .collect()
    }

    pub fn successor_distribution(
        &self,
        state: &StateVector,
        action: &str,
    ) -> Result<Vec<(Probability, TransitionOutcome)>, ModelError> {
        self.successor_distribution_by_id(state, self.action_id(action)?)
    }

    /// Samples one transition. Single-outcome actions draw nothing from `rng`.
    pub fn step_by_id<R: Rng + ?Sized>(
        &self,
        state: &StateVector,
        action: usize,
        rng: &mut R,
    ) -> Result<TransitionOutcome, ModelError> {
        self.check_step(state, action)?;
        let outcomes = &self.actions[action].outcomes;
        let chosen = if outcomes.len() == 1 {
            &outcomes[0]
        } else {
            let denom = outcomes
                .iter()
                .fold(1i64, |acc, o| num_integer_lcm(acc, *o.probability.denom()));
            let draw = rng.random_range(0..denom);
            let mut acc = 0i64;
            let mut pick = outcomes.last().expect("validated actions have outcomes");
            for outcome in outcomes {
                acc += outcome.probability.numer() * (denom / outcome.probability.denom());
                if draw < acc {
                    pick = outcome;
                    break;
                }
            }
            pick
        };
        let next_state = self.apply_effects(state, &chosen.effects)?;
        let terminal = self.is_terminal(&next_state)?;
        Ok(TransitionOutcome {
            next_state,
            alignment: self.alignment_vector(state, action)?,
            terminal,
        })
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &StateVector,
        action: &str,
        rng: &mut R,
    ) -> Result<TransitionOutcome, ModelError> {
        self.step_by_id(state, self.action_id(action)?, rng)
    }
}

fn num_integer_lcm(a: i64, b: i64) -> i64 {
    fn gcd(mut a: i64, mut b: i64) -> i64 {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a.abs()
    }
    a / gcd(a, b) * b
}

/// Checks that outcome probabilities lie in (0, 1] and sum to exactly 1.
pub fn probabilities_are_exact(probabilities: &[Probability]) -> bool {
    let sum = probabilities.iter().fold(Probability::zero(), |acc, p| acc + p);
    probabilities
        .iter()
        .all(|p| *p > Probability::zero() && *p <= Probability::one())
        && sum == Probability::one()
}

/// Lossy view of a probability, for numeric backups.
pub fn probability_f64(p: &Probability) -> f64 {
    p.to_f64().unwrap_or(f64::NAN)
}
