//! Scoring executed trajectories and building debrief reports.

mod episode;
mod report;
mod trajectory;

pub use episode::{Episode, EpisodeError};
pub use report::{
    build_report, compare_to_front, AssessError, AssessmentReport, Dominance, FrontComparison, Recommendation,
    RecommendedStep, Regret, Remark, StepRow,
};
pub use trajectory::{
    score_trajectory, state_from_map, state_to_map, vector_to_map, IntegrityError, ScoreBreakdown, StepRecord,
    Trajectory, TrajectoryOutcome,
};
