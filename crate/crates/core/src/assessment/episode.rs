use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::trajectory::{StepRecord, Trajectory, TrajectoryOutcome};
use crate::model::{ModelError, Scenario, StateVector};

/// A seeded run through a scenario, recording every step.
///
/// Replaying the same seed and action names reproduces the same
/// trajectory.
#[derive(Debug, Clone)]
pub struct Episode {
    scenario: Arc<Scenario>,
    rng: ChaCha8Rng,
    seed: u64,
    gamma: f64,
    horizon: Option<u32>,
    state: StateVector,
    steps: Vec<StepRecord>,
    outcome: Option<TrajectoryOutcome>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EpisodeError {
    #[error("episode already finished ({0})")]
    Finished(TrajectoryOutcome),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl Episode {
    pub fn new(scenario: Arc<Scenario>, seed: u64, gamma: f64, horizon: Option<u32>) -> Self {
        let state = scenario.initial_state().clone();
        let outcome = match scenario.is_terminal(&state) {
            Ok(Some(label)) => Some(label.into()),
            _ if horizon == Some(0) => Some(TrajectoryOutcome::Truncated),
            _ => None,
        };
        Episode {
            scenario,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            gamma,
            horizon,
            state,
            steps: Vec::new(),
            outcome,
        }
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    /// `None` while the episode is still running.
    pub fn outcome(&self) -> Option<TrajectoryOutcome> {
        self.outcome
    }

    pub fn is_finished(&self) -> bool {
        self.outcome.is_some()
    }

    /// Actions applicable now; empty once finished.
    pub fn available_actions(&self) -> Vec<&str> {
        if self.is_finished() {
            return Vec::new();
        }
        self.scenario.available_actions(&self.state).unwrap_or_default()
    }

    pub fn apply(&mut self, action: &str) -> Result<&StepRecord, EpisodeError> {
        if let Some(outcome) = self.outcome {
            return Err(EpisodeError::Finished(outcome));
        }
        let result = self.scenario.step(&self.state, action, &mut self.rng)?;
        let record = StepRecord {
            index: self.steps.len(),
            state: std::mem::replace(&mut self.state, result.next_state.clone()),
            action: action.to_string(),
            alignment: result.alignment,
            next_state: result.next_state,
        };
        self.steps.push(record);
        self.outcome = match result.terminal {
            Some(label) => Some(label.into()),
            None if self.horizon.is_some_and(|h| self.steps.len() >= h as usize) => Some(TrajectoryOutcome::Truncated),
            None => None,
        };
        Ok(self.steps.last().expect("just pushed"))
    }

    /// Ends a running episode early; its trajectory is marked truncated.
    pub fn abandon(&mut self) {
        self.outcome.get_or_insert(TrajectoryOutcome::Truncated);
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            scenario: self.scenario.name().to_string(),
            scenario_hash: self.scenario.content_hash().to_string(),
            seed: self.seed,
            gamma: self.gamma,
            horizon: self.horizon,
            steps: self.steps.clone(),
            outcome: self.outcome.unwrap_or(TrajectoryOutcome::Truncated),
        }
    }
}
