//! Multi-objective dynamic programming over scenarios.

mod export;
mod hypervolume;
mod pareto;
mod pmovi;
mod policy;

pub use export::{read_front, write_front, EntryRecord, FrontFile, FrontFileError};
pub use hypervolume::hypervolume;
pub use pareto::{pareto_prune, ParetoSet};
pub use pmovi::{
    pmovi, pmovi_with, FrontEntry, SolutionFront, SolveConfig, StateKind, Transition, STOCHASTIC_VECTOR_CAP,
};
pub use policy::{extract_policy, PlanStep, PolicyTrace};

use crate::model::ModelError;
use crate::value::ValueVector;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("vectors have mixed dimensions ({expected} vs {found})")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("reference {reference} is not below front member {member}")]
    InvalidReference {
        reference: ValueVector,
        member: ValueVector,
    },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("{target} is not on the front; nearest member is {nearest}")]
    NotOnFront { target: ValueVector, nearest: ValueVector },
    #[error("state {0} is not part of the solution")]
    UnknownState(String),
    #[error("front is empty")]
    EmptyFront,
    #[error(transparent)]
    Model(#[from] ModelError),
}
