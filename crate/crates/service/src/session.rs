use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use valence_core::assessment::{score_trajectory, state_to_map, vector_to_map, Episode, StepRecord, TrajectoryOutcome};

use crate::events::EventLog;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_horizon")]
    pub horizon: u32,
    /// Show alignment scores while the session runs.
    #[serde(default)]
    pub reveal: bool,
}

fn default_gamma() -> f64 {
    1.0
}

fn default_horizon() -> u32 {
    50
}

pub const MAX_HORIZON: u32 = 1000;

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            gamma: default_gamma(),
            horizon: default_horizon(),
            reveal: false,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if self.horizon == 0 || self.horizon > MAX_HORIZON {
            return Err(format!("horizon must be in 1..={MAX_HORIZON}, got {}", self.horizon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Active,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableView {
    pub name: String,
    pub level: String,
    pub index: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepView {
    pub index: usize,
    pub state: Map<String, Value>,
    pub action: String,
    pub next_state: Map<String, Value>,
    /// Absent in blind sessions until they finish.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<Map<String, Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub config: SessionConfig,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<TrajectoryOutcome>,
    pub step_count: usize,
    pub variables: Vec<VariableView>,
    pub available_actions: Vec<String>,
    pub steps: Vec<StepView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cumulative: Option<Map<String, Value>>,
    pub created_at: String,
    pub updated_at: String,
}

/// Body of a successful action submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionResponse {
    pub step: StepView,
    pub session: SessionView,
}

#[derive(Debug)]
pub(crate) struct Session {
    pub id: String,
    pub scenario_name: String,
    pub episode: Episode,
    pub config: SessionConfig,
    pub created_at: String,
    pub updated_at: String,
    /// Sequence number the next event gets.
    pub next_seq: u64,
    /// Idempotency key to (action, response body).
    pub replies: HashMap<String, (String, String)>,
    /// Report bodies by canonical weight string.
    pub reports: HashMap<String, String>,
    pub log: EventLog,
}

impl Session {
    fn revealed(&self) -> bool {
        self.config.reveal || self.episode.is_finished()
    }

    pub fn step_view(&self, step: &StepRecord) -> StepView {
        let scenario = self.episode.scenario();
        StepView {
            index: step.index,
            state: state_to_map(scenario, &step.state),
            action: step.action.clone(),
            next_state: state_to_map(scenario, &step.next_state),
            alignment: self
                .revealed()
                .then(|| vector_to_map(&scenario.value_names(), &step.alignment)),
        }
    }

    pub fn view(&self) -> SessionView {
        let scenario = self.episode.scenario();
        let state = self.episode.state();
        let variables = scenario
            .variables()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let index = usize::from(state.level(i));
                VariableView {
                    name: v.name.clone(),
                    level: v.levels[index].clone(),
                    index,
                    size: v.size(),
                }
            })
            .collect();
        let cumulative = self.revealed().then(|| {
            let score = score_trajectory(scenario, &self.episode.trajectory(), self.config.gamma)
                .expect("a session's own trajectory always scores");
            vector_to_map(&scenario.value_names(), &score.cumulative)
        });
        SessionView {
            id: self.id.clone(),
            scenario: self.scenario_name.clone(),
            scenario_hash: scenario.content_hash().to_string(),
            seed: self.episode.seed(),
            config: self.config,
            status: if self.episode.is_finished() {
                Status::Finished
            } else {
                Status::Active
            },
            outcome: self.episode.outcome(),
            step_count: self.episode.steps().len(),
            variables,
            available_actions: self.episode.available_actions().into_iter().map(String::from).collect(),
            steps: self.episode.steps().iter().map(|s| self.step_view(s)).collect(),
            cumulative,
            created_at: self.created_at.clone(),
            updated_at: self.updated_at.clone(),
        }
    }

    /// Response body for the step just applied.
    pub fn action_body(&self) -> String {
        let last = self.episode.steps().last().expect("called after a step");
        let response = ActionResponse {
            step: self.step_view(last),
            session: self.view(),
        };
        serde_json::to_string(&response).expect("views always serialise")
    }
}
