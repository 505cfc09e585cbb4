use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::trajectory::{score_trajectory, state_to_map, IntegrityError, Trajectory, TrajectoryOutcome};
use crate::model::{ModelError, Scenario};
use crate::solver::{extract_policy, ParetoSet, SolutionFront, SolverError};
use crate::value::ValueVector;

/// Flag threshold for per-step remarks.
const REMARK_THRESHOLD: f64 = -0.5;
const MAX_RECOMMENDATIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dominance {
    OnFront,
    Dominated,
    /// Not matched or dominated by any front member. Only truncated or
    /// foreign trajectories end up here.
    Incomparable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regret {
    pub member: ValueVector,
    /// `member - cumulative`, non-negative in every component.
    pub regret: ValueVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontComparison {
    pub status: Dominance,
    pub regrets: Vec<Regret>,
    pub nearest: ValueVector,
    pub nearest_distance: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum AssessError {
    #[error(transparent)]
    Integrity(#[from] IntegrityError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("solution was computed for scenario hash {found}, expected {expected}")]
    SolutionMismatch { expected: String, found: String },
    #[error("preference has {found} weights, scenario has {expected} values")]
    BadWeights { expected: usize, found: usize },
}

/// Places `cumulative` relative to a front. Members within `tau` (L∞)
/// count as equal.
pub fn compare_to_front(cumulative: &ValueVector, front: &ParetoSet, tau: f64) -> Result<FrontComparison, SolverError> {
    let mut nearest: Option<(&ValueVector, f64)> = None;
    for member in front {
        if member.dim() != cumulative.dim() {
            return Err(SolverError::DimensionMismatch {
                expected: cumulative.dim(),
                found: member.dim(),
            });
        }
        let d = member.chebyshev(cumulative);
        let better = match nearest {
            None => true,
            Some((best, bd)) => d < bd || (d == bd && member.lex_cmp(best).is_gt()),
        };
        if better {
            nearest = Some((member, d));
        }
    }
    let (nearest, nearest_distance) = nearest.ok_or(SolverError::EmptyFront)?;
    let (status, regrets) = if nearest_distance <= tau {
        (Dominance::OnFront, Vec::new())
    } else {
        let regrets: Vec<Regret> = front
            .iter()
            .filter(|m| m.dominates(cumulative))
            .map(|m| Regret {
                member: m.clone(),
                regret: m.sub(cumulative),
            })
            .collect();
        let status = if regrets.is_empty() {
            Dominance::Incomparable
        } else {
            Dominance::Dominated
        };
        (status, regrets)
    };
    Ok(FrontComparison {
        status,
        regrets,
        nearest: nearest.clone(),
        nearest_distance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub index: usize,
    pub state: Map<String, Value>,
    pub action: String,
    pub alignment: ValueVector,
    pub next_state: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendedStep {
    pub depth: u32,
    pub parent: Option<usize>,
    pub probability: f64,
    pub state: Map<String, Value>,
    pub action: String,
    pub alignment: ValueVector,
    /// Value-to-go promised from this step on.
    pub expected: ValueVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub reason: String,
    pub vector: ValueVector,
    pub branching: bool,
    pub steps: Vec<RecommendedStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Remark {
    pub step: usize,
    pub action: String,
    pub values: Vec<String>,
    pub text: String,
}

/// The after-action debrief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub values: Vec<String>,
    pub gamma: f64,
    pub horizon: Option<u32>,
    pub outcome: TrajectoryOutcome,
    pub caveat: Option<String>,
    pub start_state: Map<String, Value>,
    pub cumulative: ValueVector,
    pub steps: Vec<StepRow>,
    pub dominance: Dominance,
    pub regrets: Vec<Regret>,
    pub nearest: ValueVector,
    pub nearest_distance: f64,
    pub front: Vec<ValueVector>,
    pub preference: Option<Vec<f64>>,
    pub recommendations: Vec<Recommendation>,
    pub remarks: Vec<Remark>,
}

pub fn build_report(
    scenario: &Scenario,
    trajectory: &Trajectory,
    solution: &SolutionFront,
    preference: Option<&[f64]>,
) -> Result<AssessmentReport, AssessError> {
    if solution.scenario_hash() != scenario.content_hash() {
        return Err(AssessError::SolutionMismatch {
            expected: scenario.content_hash().to_string(),
            found: solution.scenario_hash().to_string(),
        });
    }
    let names = scenario.value_names();
    if let Some(w) = preference {
        if w.len() != names.len() {
            return Err(AssessError::BadWeights {
                expected: names.len(),
                found: w.len(),
            });
        }
    }
    let config = solution.config();
    let score = score_trajectory(scenario, trajectory, config.gamma)?;
    let start = trajectory.start(scenario);
    let front = solution
        .front(start)
        .ok_or_else(|| SolverError::UnknownState(scenario.format_state(start)))?;
    let comparison = compare_to_front(&score.cumulative, &front, config.dedup)?;

    let mut picks: Vec<(String, ValueVector)> = Vec::new();
    match preference {
        Some(w) => {
            let best = argmax(&front, |v| v.dot(w)).expect("front is non-empty");
            picks.push((format!("maximises the preference weights {w:?}"), best.clone()));
        }
        None => {
            for (i, name) in names.iter().enumerate() {
                let best = argmax(&front, |v| v[i]).expect("front is non-empty");
                push_unique(&mut picks, format!("best achievable {name}"), best);
            }
            push_unique(&mut picks, "closest to your score".to_string(), &comparison.nearest);
            if picks.len() > MAX_RECOMMENDATIONS {
                let nearest = picks.pop().expect("non-empty");
                picks.truncate(MAX_RECOMMENDATIONS - 1);
                picks.push(nearest);
            }
        }
    }
    let mut recommendations = Vec::with_capacity(picks.len());
    for (reason, vector) in picks {
        let trace = extract_policy(solution, start, &vector)?;
        let mut steps = Vec::with_capacity(trace.steps.len());
        for s in &trace.steps {
            steps.push(RecommendedStep {
                depth: s.depth,
                parent: s.parent,
                probability: s.probability,
                state: state_to_map(scenario, &s.state),
                action: s.action.clone(),
                alignment: scenario.alignment_vector(&s.state, scenario.action_id(&s.action)?)?,
                expected: s.expected.clone(),
            });
        }
        recommendations.push(Recommendation {
            reason,
            vector,
            branching: trace.branching,
            steps,
        });
    }

    let remarks = trajectory
        .steps
        .iter()
        .filter_map(|step| {
            let flagged: Vec<(usize, f64)> = step
                .alignment
                .iter()
                .enumerate()
                .filter(|(_, &x)| x <= REMARK_THRESHOLD)
                .map(|(i, &x)| (i, x))
                .collect();
            if flagged.is_empty() {
                return None;
            }
            let parts: Vec<String> = flagged.iter().map(|&(i, x)| format!("{} ({x})", names[i])).collect();
            Some(Remark {
                step: step.index,
                action: step.action.clone(),
                values: flagged.iter().map(|&(i, _)| names[i].clone()).collect(),
                text: format!(
                    "Step {}: {} worked against {}.",
                    step.index + 1,
                    step.action,
                    join_and(&parts)
                ),
            })
        })
        .collect();

    let caveat = match trajectory.outcome {
        TrajectoryOutcome::Success => None,
        TrajectoryOutcome::Failure => {
            Some("the episode ended in failure; the comparison uses the same front as successful runs".to_string())
        }
        TrajectoryOutcome::Truncated => Some(
            "the episode stopped before reaching a terminal state; the score covers only the steps taken".to_string(),
        ),
    };

    Ok(AssessmentReport {
        scenario: scenario.name().to_string(),
        scenario_hash: scenario.content_hash().to_string(),
        values: names,
        gamma: config.gamma,
        horizon: config.horizon,
        outcome: trajectory.outcome,
        caveat,
        start_state: state_to_map(scenario, start),
        cumulative: score.cumulative,
        steps: trajectory
            .steps
            .iter()
            .map(|s| StepRow {
                index: s.index,
                state: state_to_map(scenario, &s.state),
                action: s.action.clone(),
                alignment: s.alignment.clone(),
                next_state: state_to_map(scenario, &s.next_state),
            })
            .collect(),
        dominance: comparison.status,
        regrets: comparison.regrets,
        nearest: comparison.nearest,
        nearest_distance: comparison.nearest_distance,
        front: front.into_vec(),
        preference: preference.map(<[f64]>::to_vec),
        recommendations,
        remarks,
    })
}

/// First maximiser in front order, so ties go to the lexicographically
/// larger vector.
fn argmax(front: &ParetoSet, key: impl Fn(&ValueVector) -> f64) -> Option<&ValueVector> {
    let mut best: Option<(&ValueVector, f64)> = None;
    for v in front {
        let k = key(v);
        match best {
            Some((b, bk)) if k < bk || (k == bk && v.lex_cmp(b).is_le()) => {}
            _ => best = Some((v, k)),
        }
    }
    best.map(|(v, _)| v)
}

fn push_unique(picks: &mut Vec<(String, ValueVector)>, reason: String, v: &ValueVector) {
    match picks.iter_mut().find(|(_, p)| p == v) {
        Some((existing, _)) => {
            existing.push_str(" and ");
            existing.push_str(&reason);
        }
        None => picks.push((reason, v.clone())),
    }
}

fn join_and(parts: &[String]) -> String {
    match parts {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

impl AssessmentReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("reports serialise");
        text.push('\n');
        text
    }

    /// Plain-text summary for terminals.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let vec = |v: &ValueVector| {
            self.values
                .iter()
                .zip(v.iter())
                .map(|(n, x)| format!("{n} {x:+.3}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let short = |v: &ValueVector| {
            let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
            format!("({})", parts.join(", "))
        };
        let _ = writeln!(out, "scenario    {}", self.scenario);
        let _ = writeln!(out, "outcome     {}", self.outcome);
        let _ = writeln!(out, "cumulative  {}", vec(&self.cumulative));
        let status = match self.dominance {
            Dominance::OnFront => "on the front",
            Dominance::Dominated => "dominated",
            Dominance::Incomparable => "incomparable",
        };
        let _ = writeln!(out, "status      {status}");
        let _ = writeln!(
            out,
            "nearest     {} (distance {:.3})",
            vec(&self.nearest),
            self.nearest_distance
        );
        if let Some(c) = &self.caveat {
            let _ = writeln!(out, "note        {c}");
        }
        if !self.steps.is_empty() {
            let _ = writeln!(out, "\nsteps");
            for s in &self.steps {
                let _ = writeln!(out, "  {:>2}  {:<20} {}", s.index + 1, s.action, vec(&s.alignment));
            }
        }
        if !self.regrets.is_empty() {
            let _ = writeln!(out, "\nregret against dominating front vectors");
            for r in &self.regrets {
                let _ = writeln!(out, "  {}  ->  {}", short(&r.member), vec(&r.regret));
            }
        }
        if !self.remarks.is_empty() {
            let _ = writeln!(out, "\nremarks");
            for r in &self.remarks {
                let _ = writeln!(out, "  {}", r.text);
            }
        }
        for rec in &self.recommendations {
            let _ = writeln!(out, "\nalternative {} ({})", short(&rec.vector), rec.reason);
            for (i, s) in rec.steps.iter().enumerate() {
                if rec.branching {
                    let indent = "  ".repeat(s.depth as usize + 1);
                    let _ = writeln!(out, "{indent}{} [p={:.2}]", s.action, s.probability);
                } else {
                    let _ = writeln!(out, "  {:>2}  {}", i + 1, s.action);
                }
            }
        }
        out
    }
}
