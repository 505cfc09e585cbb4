//! `*.front.json`: solved vector sets with provenance.
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "scenario": "firefight",
//!   "scenario_hash": "<sha256 hex>",
//!   "values": ["Professionalism", "Proximity"],
//!   "actions": ["EvacuateOccupants", ...],
//!   "config": { "gamma": 1.0, "horizon": 50, ... },
//!   "sweeps": 12, "converged": true, "approximate": false, "residual": 0.0,
//!   "initial_state": { "fire": "Moderate", ... },
//!   "initial_front": [[7.1, 3.8], ...],
//!   "layers": [                      // one per sweep, 0 first
//!     [                              // one per state, enumeration order
//!       [ { "value": [..], "action": "ContainFire", "successors": [[state, entry]] } ]
//!     ]
//!   ]
//! }
//! ```

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::pmovi::{build_transitions, FrontEntry, SolutionFront, SolveConfig};
use crate::model::Scenario;
use crate::value::ValueVector;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontFile {
    pub format_version: u32,
    pub scenario: String,
    pub scenario_hash: String,
    pub values: Vec<String>,
    pub actions: Vec<String>,
    pub config: SolveConfig,
    pub sweeps: usize,
    pub converged: bool,
    pub approximate: bool,
    pub residual: f64,
    pub initial_state: serde_json::Map<String, serde_json::Value>,
    pub initial_front: Vec<ValueVector>,
    pub layers: Vec<Vec<Vec<EntryRecord>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryRecord {
    pub value: ValueVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub successors: Vec<(u32, u32)>,
}

#[derive(Debug, thiserror::Error)]
pub enum FrontFileError {
    #[error("malformed front file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("front file was solved for scenario hash {found}, expected {expected}")]
    HashMismatch { expected: String, found: String },
    #[error("front file is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

impl FrontFile {
    pub fn from_solution(solution: &SolutionFront, scenario: &Scenario) -> Self {
        let actions = solution.action_names();
        FrontFile {
            format_version: 1,
            scenario: solution.scenario_name().to_string(),
            scenario_hash: solution.scenario_hash().to_string(),
            values: solution.value_names().to_vec(),
            actions: actions.to_vec(),
            config: *solution.config(),
            sweeps: solution.sweeps(),
            converged: solution.converged(),
            approximate: solution.approximate(),
            residual: if solution.residual().is_finite() {
                solution.residual()
            } else {
                f64::MAX
            },
            initial_state: scenario
                .describe_state(scenario.initial_state())
                .map(|(v, l)| (v.to_string(), serde_json::Value::String(l.to_string())))
                .collect(),
            initial_front: solution.initial_front().into_vec(),
            layers: solution
                .layers()
                .iter()
                .map(|layer| {
                    layer
                        .iter()
                        .map(|entries| {
                            entries
                                .iter()
                                .map(|e| EntryRecord {
                                    value: e.value.clone(),
                                    action: e.action.map(|a| actions[a].clone()),
                                    successors: e.successors.to_vec(),
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Rebuilds a solution against the scenario it was solved for.
    pub fn into_solution(self, scenario: &Scenario) -> Result<SolutionFront, FrontFileError> {
        if self.scenario_hash != scenario.content_hash() {
            return Err(FrontFileError::HashMismatch {
                expected: scenario.content_hash().to_string(),
                found: self.scenario_hash,
            });
        }
        let n = scenario.state_count();
        if self.layers.is_empty() || self.layers.iter().any(|l| l.len() != n) {
            return Err(FrontFileError::Inconsistent(format!(
                "every layer must list {n} states"
            )));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.into_iter().enumerate() {
            let mut states = Vec::with_capacity(n);
            for entries in layer {
                let mut out = Vec::with_capacity(entries.len());
                for e in entries {
                    let action = match &e.action {
                        Some(name) => Some(scenario.action_id(name)?),
                        None => None,
                    };
                    if k == 0 && action.is_some() {
                        return Err(FrontFileError::Inconsistent("sweep 0 has no decisions".into()));
                    }
                    out.push(FrontEntry {
                        value: e.value,
                        action,
                        successors: SmallVec::from_vec(e.successors),
                    });
                }
                states.push(out);
            }
            layers.push(states);
        }
        for k in 1..layers.len() {
            for entries in &layers[k] {
                for e in entries {
                    for &(s, i) in &e.successors {
                        let ok = layers[k - 1]
                            .get(s as usize)
                            .is_some_and(|prev| (i as usize) < prev.len());
                        if !ok {
                            return Err(FrontFileError::Inconsistent(format!(
                                "sweep {k} points at missing entry ({s}, {i})"
                            )));
                        }
                    }
                }
            }
        }
        let transitions = build_transitions(scenario, &|state| scenario.available_action_ids(state))?;
        Ok(SolutionFront {
            scenario: self.scenario,
            scenario_hash: self.scenario_hash,
            values: self.values,
            actions: self.actions,
            config: self.config,
            layers,
            initial: scenario.state_index(scenario.initial_state()),
            converged: self.converged,
            approximate: self.approximate,
            residual: self.residual,
            states: scenario.enumerate_states(),
            transitions,
        })
    }
}

pub fn write_front(solution: &SolutionFront, scenario: &Scenario) -> String {
    let mut text = serde_json::to_string_pretty(&FrontFile::from_solution(solution, scenario))
        .expect("front files always serialise");
    text.push('\n');
    text
}

pub fn read_front(text: &str, scenario: &Scenario) -> Result<SolutionFront, FrontFileError> {
    let file: FrontFile = serde_json::from_str(text)?;
    file.into_solution(scenario)
}
