//! Executed trajectories and the `*.traj.jsonl` format.
//!
//! The first line is a header, then one line per step:
//!
//! ```text
//! {"kind":"header","format_version":1,"scenario":"firefight","scenario_hash":"…","seed":7,"gamma":1.0,"horizon":50,"values":["Professionalism","Proximity"],"outcome":"truncated","steps":2}
//! {"kind":"step","index":0,"state":{"fire":"Moderate",…},"action":"PrepareEquipment","alignment":{"Professionalism":0.5,"Proximity":-0.1},"next_state":{…}}
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::model::{Scenario, StateVector, TerminalLabel};
use crate::value::{ExactSum, ValueVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryOutcome {
    Success,
    Failure,
    Truncated,
}

impl From<TerminalLabel> for TrajectoryOutcome {
    fn from(label: TerminalLabel) -> Self {
        match label {
            TerminalLabel::Success => TrajectoryOutcome::Success,
            TerminalLabel::Failure => TrajectoryOutcome::Failure,
        }
    }
}

impl fmt::Display for TrajectoryOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrajectoryOutcome::Success => "success",
            TrajectoryOutcome::Failure => "failure",
            TrajectoryOutcome::Truncated => "truncated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub state: StateVector,
    pub action: String,
    pub alignment: ValueVector,
    pub next_state: StateVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub gamma: f64,
    pub horizon: Option<u32>,
    pub steps: Vec<StepRecord>,
    pub outcome: TrajectoryOutcome,
}

impl Trajectory {
    /// State the trajectory starts from, or the scenario's initial state
    /// when it has no steps.
    pub fn start<'a>(&'a self, scenario: &'a Scenario) -> &'a StateVector {
        self.steps.first().map_or(scenario.initial_state(), |s| &s.state)
    }

    pub fn actions(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.action.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntegrityError {
    #[error("trajectory belongs to scenario hash {found}, expected {expected}")]
    HashMismatch { expected: String, found: String },
    #[error("step {index}: state does not follow from the previous step")]
    BrokenChain { index: usize },
    #[error("step {index}: {reason}")]
    InvalidStep { index: usize, reason: String },
    #[error("step {index}: logged alignment {logged} differs from recomputed {expected}")]
    TamperedAlignment {
        index: usize,
        logged: ValueVector,
        expected: ValueVector,
    },
    #[error("step {index}: next state cannot result from this action")]
    ImpossibleTransition { index: usize },
    #[error("step {index}: step indices must count up from 0")]
    BadIndex { index: usize },
    #[error("trajectory has {steps} steps, more than the horizon {horizon}")]
    TooLong { steps: usize, horizon: u32 },
    #[error("logged outcome {logged} but the final state says {actual}")]
    OutcomeMismatch {
        logged: TrajectoryOutcome,
        actual: TrajectoryOutcome,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Cumulative alignment plus its per-step terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBreakdown {
    pub cumulative: ValueVector,
    /// Undiscounted alignment of each step.
    pub per_step: Vec<ValueVector>,
    gamma: f64,
    sums: Vec<ExactSum>,
}

impl ScoreBreakdown {
    fn from_terms(per_step: Vec<ValueVector>, gamma: f64, dim: usize) -> Self {
        let mut sums = vec![ExactSum::new(); dim];
        let mut weight = 1.0;
        for step in &per_step {
            for (sum, &x) in sums.iter_mut().zip(step.iter()) {
                sum.add(weight * x);
            }
            weight *= gamma;
        }
        ScoreBreakdown {
            cumulative: sums.iter().map(ExactSum::value).collect(),
            per_step,
            gamma,
            sums,
        }
    }

    /// Score of `self` followed by `suffix`: `self + γ^len · suffix`.
    /// Exact when γ = 1.
    pub fn concat(&self, suffix: &ScoreBreakdown) -> ScoreBreakdown {
        let shift = self.gamma.powi(self.per_step.len() as i32);
        let mut sums = self.sums.clone();
        for (sum, other) in sums.iter_mut().zip(&suffix.sums) {
            if shift == 1.0 {
                sum.merge(other);
            } else {
                sum.add(shift * other.value());
            }
        }
        let mut per_step = self.per_step.clone();
        per_step.extend(suffix.per_step.iter().cloned());
        ScoreBreakdown {
            cumulative: sums.iter().map(ExactSum::value).collect(),
            per_step,
            gamma: self.gamma,
            sums,
        }
    }
}

/// Scores a trajectory after recomputing every step against the model.
pub fn score_trajectory(
    scenario: &Scenario,
    trajectory: &Trajectory,
    gamma: f64,
) -> Result<ScoreBreakdown, IntegrityError> {
    if trajectory.scenario_hash != scenario.content_hash() {
        return Err(IntegrityError::HashMismatch {
            expected: scenario.content_hash().to_string(),
            found: trajectory.scenario_hash.clone(),
        });
    }
    if let Some(h) = trajectory.horizon {
        if trajectory.steps.len() > h as usize {
            return Err(IntegrityError::TooLong {
                steps: trajectory.steps.len(),
                horizon: h,
            });
        }
    }
    let mut terms = Vec::with_capacity(trajectory.steps.len());
    for (i, step) in trajectory.steps.iter().enumerate() {
        let invalid = |e: &dyn fmt::Display| IntegrityError::InvalidStep {
            index: i,
            reason: e.to_string(),
        };
        if step.index != i {
            return Err(IntegrityError::BadIndex { index: i });
        }
        if i > 0 && trajectory.steps[i - 1].next_state != step.state {
            return Err(IntegrityError::BrokenChain { index: i });
        }
        scenario.check_state(&step.state).map_err(|e| invalid(&e))?;
        let action = scenario.action_id(&step.action).map_err(|e| invalid(&e))?;
        let outcomes = scenario
            .successor_distribution_by_id(&step.state, action)
            .map_err(|e| invalid(&e))?;
        let expected = &outcomes[0].1.alignment;
        if *expected != step.alignment {
            return Err(IntegrityError::TamperedAlignment {
                index: i,
                logged: step.alignment.clone(),
                expected: expected.clone(),
            });
        }
        if !outcomes.iter().any(|(_, t)| t.next_state == step.next_state) {
            return Err(IntegrityError::ImpossibleTransition { index: i });
        }
        terms.push(expected.clone());
    }
    let actual = match trajectory.steps.last() {
        Some(last) => scenario
            .is_terminal(&last.next_state)
            .map_err(|e| IntegrityError::InvalidStep {
                index: trajectory.steps.len() - 1,
                reason: e.to_string(),
            })?
            .map_or(TrajectoryOutcome::Truncated, Into::into),
        None => TrajectoryOutcome::Truncated,
    };
    if actual != trajectory.outcome {
        return Err(IntegrityError::OutcomeMismatch {
            logged: trajectory.outcome,
            actual,
        });
    }
    Ok(ScoreBreakdown::from_terms(terms, gamma, scenario.values().len()))
}

// ---------------------------------------------------------------------------
// JSONL

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Header {
        format_version: u32,
        scenario: String,
        scenario_hash: String,
        seed: u64,
        gamma: f64,
        #[serde(default)]
        horizon: Option<u32>,
        values: Vec<String>,
        outcome: TrajectoryOutcome,
        steps: usize,
    },
    Step {
        index: usize,
        state: Map<String, Value>,
        action: String,
        alignment: Map<String, Value>,
        next_state: Map<String, Value>,
    },
}

pub fn state_to_map(scenario: &Scenario, state: &StateVector) -> Map<String, Value> {
    scenario
        .describe_state(state)
        .map(|(v, l)| (v.to_string(), Value::String(l.to_string())))
        .collect()
}

pub fn state_from_map(scenario: &Scenario, map: &Map<String, Value>) -> Result<StateVector, String> {
    if map.len() != scenario.variables().len() {
        return Err(format!(
            "state names {} variables, scenario has {}",
            map.len(),
            scenario.variables().len()
        ));
    }
    let mut pairs = Vec::with_capacity(map.len());
    for (k, v) in map {
        let level = v.as_str().ok_or_else(|| format!("level of `{k}` must be a string"))?;
        pairs.push((k.as_str(), level));
    }
    scenario
        .state_from_names(pairs)
        .ok_or_else(|| "state names an unknown variable or level".to_string())
}

pub fn vector_to_map(names: &[String], v: &ValueVector) -> Map<String, Value> {
    names
        .iter()
        .zip(v.iter())
        .map(|(n, &x)| (n.clone(), serde_json::json!(x)))
        .collect()
}

fn vector_from_map(names: &[String], map: &Map<String, Value>) -> Result<ValueVector, String> {
    if map.len() != names.len() {
        return Err(format!(
            "alignment names {} values, expected {}",
            map.len(),
            names.len()
        ));
    }
    names
        .iter()
        .map(|n| {
            map.get(n)
                .and_then(Value::as_f64)
                .ok_or_else(|| format!("alignment is missing value `{n}`"))
        })
        .collect()
}

impl Trajectory {
    pub fn to_jsonl(&self, scenario: &Scenario) -> String {
        let names = scenario.value_names();
        let mut out = String::new();
        let header = Line::Header {
            format_version: 1,
            scenario: self.scenario.clone(),
            scenario_hash: self.scenario_hash.clone(),
            seed: self.seed,
            gamma: self.gamma,
            horizon: self.horizon,
            values: names.clone(),
            outcome: self.outcome,
            steps: self.steps.len(),
        };
        out.push_str(&serde_json::to_string(&header).expect("header serialises"));
        out.push('\n');
        for step in &self.steps {
            let line = Line::Step {
                index: step.index,
                state: state_to_map(scenario, &step.state),
                action: step.action.clone(),
                alignment: vector_to_map(&names, &step.alignment),
                next_state: state_to_map(scenario, &step.next_state),
            };
            out.push_str(&serde_json::to_string(&line).expect("step serialises"));
            out.push('\n');
        }
        out
    }

    /// Reads a trajectory file. Names are resolved against `scenario`;
    /// integrity is checked separately by [`score_trajectory`].
    pub fn from_jsonl(text: &str, scenario: &Scenario) -> Result<Trajectory, IntegrityError> {
        let fail = |line: usize, message: String| IntegrityError::Format { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| fail(1, "empty trajectory file".into()))?;
        let header: Line = serde_json::from_str(first).map_err(|e| fail(1, e.to_string()))?;
        let Line::Header {
            format_version,
            scenario: name,
            scenario_hash,
            seed,
            gamma,
            horizon,
            values,
            outcome,
            steps: count,
        } = header
        else {
            return Err(fail(1, "first line must be the header".into()));
        };
        if format_version != 1 {
            return Err(fail(1, format!("unsupported format_version {format_version}")));
        }
        if values != scenario.value_names() {
            return Err(fail(1, "value names do not match the scenario".into()));
        }
        let mut steps = Vec::new();
        for (n, raw) in lines {
            let line = n + 1;
            let parsed: Line = serde_json::from_str(raw).map_err(|e| fail(line, e.to_string()))?;
            let Line::Step {
                index,
                state,
                action,
                alignment,
                next_state,
            } = parsed
            else {
                return Err(fail(line, "only one header is allowed".into()));
            };
            steps.push(StepRecord {
                index,
                state: state_from_map(scenario, &state).map_err(|m| fail(line, m))?,
                action,
                alignment: vector_from_map(&values, &alignment).map_err(|m| fail(line, m))?,
                next_state: state_from_map(scenario, &next_state).map_err(|m| fail(line, m))?,
            });
        }
        if steps.len() != count {
            return Err(fail(
                1,
                format!("header announces {count} steps, file has {}", steps.len()),
            ));
        }
        Ok(Trajectory {
            scenario: name,
            scenario_hash,
            seed,
            gamma,
            horizon,
            steps,
            outcome,
        })
    }
}
