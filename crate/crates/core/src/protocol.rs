//! Departmental protocols as permit / forbid / oblige rules.
//!
//! A protocol narrows the actions available in each state. `*.protocol.json`
//! files look like this:
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "name": "sop-safety-first",
//!   "stance": "permissive",
//!   "rules": [
//!     { "modality": "forbid", "action": "AggressiveFireSuppression",
//!       "when": "equipment == NotReady", "priority": 0 }
//!   ]
//! }
//! ```
//!
//! `stance` defaults to `permissive`, `when` to always and `priority` to 0.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::assessment::state_to_map;
use crate::diagnostic::{Diagnostic, Location, Parsed, SourceMap};
use crate::expr::{Binder, Expr, Type};
use crate::model::{ModelError, Scenario, StateVector};
use crate::scenario::{read_json, Lowering};
use crate::solver::{hypervolume, pmovi, pmovi_with, ParetoSet, SolveConfig, SolverError};
use crate::value::ValueVector;

const FORMAT_VERSION: u32 = 1;
const SAMPLE_LIMIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Permit,
    Forbid,
    Oblige,
}

impl Modality {
    /// Tie-break rank at equal priority.
    fn rank(self) -> u8 {
        match self {
            Modality::Permit => 0,
            Modality::Oblige => 1,
            Modality::Forbid => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    /// Everything applicable is allowed unless forbidden.
    #[default]
    Permissive,
    /// Only permitted actions are allowed.
    Restrictive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeonticRule {
    /// `None` fires everywhere.
    pub guard: Option<Expr>,
    pub action: usize,
    pub modality: Modality,
    pub priority: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    name: String,
    description: Option<String>,
    stance: Stance,
    rules: Vec<DeonticRule>,
    locations: Vec<Location>,
    scenario_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolDocument {
    pub format_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub stance: Stance,
    #[serde(default)]
    pub rules: Vec<RuleDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleDoc {
    pub modality: Modality,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    #[serde(default)]
    pub priority: i64,
}

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("protocol `{name}` is invalid:\n{}", render(.diagnostics))]
    Invalid { name: String, diagnostics: Vec<Diagnostic> },
    #[error("protocol was compiled against a different scenario")]
    ScenarioMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn render(diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

impl Protocol {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> Option<&str> {
        self.description.as_deref()
    }

    pub fn stance(&self) -> Stance {
        self.stance
    }

    pub fn rules(&self) -> &[DeonticRule] {
        &self.rules
    }

    /// The protocol with no rules and a permissive stance.
    pub fn empty(scenario: &Scenario) -> Protocol {
        Protocol {
            name: "empty".to_string(),
            description: None,
            stance: Stance::Permissive,
            rules: Vec::new(),
            locations: Vec::new(),
            scenario_hash: scenario.content_hash().to_string(),
        }
    }

    pub fn from_document(doc: &ProtocolDocument, scenario: &Scenario) -> Result<Parsed<Protocol>, Vec<Diagnostic>> {
        compile(doc, scenario, &SourceMap::default())
    }

    pub fn to_document(&self, scenario: &Scenario) -> ProtocolDocument {
        ProtocolDocument {
            format_version: FORMAT_VERSION,
            name: self.name.clone(),
            description: self.description.clone(),
            stance: self.stance,
            rules: self
                .rules
                .iter()
                .map(|r| RuleDoc {
                    modality: r.modality,
                    action: scenario.action_name(r.action).to_string(),
                    when: r.guard.as_ref().map(|g| g.render(scenario.variables())),
                    priority: r.priority,
                })
                .collect(),
        }
    }

    fn check(&self, scenario: &Scenario) -> Result<(), ProtocolError> {
        if self.scenario_hash == scenario.content_hash() {
            Ok(())
        } else {
            Err(ProtocolError::ScenarioMismatch)
        }
    }

    fn location(&self, rule: usize) -> Location {
        self.locations.get(rule).cloned().unwrap_or(Location {
            path: format!("/rules/{rule}"),
            line: 0,
            column: 0,
        })
    }

    /// Winning modality per action in `state`, indexed by action id.
    fn resolve(&self, scenario: &Scenario, state: &StateVector) -> Result<Vec<Option<(i64, Modality)>>, ModelError> {
        let mut winners: Vec<Option<(i64, Modality)>> = vec![None; scenario.actions().len()];
        for rule in &self.rules {
            if !fires(rule, state)? {
                continue;
            }
            let slot = &mut winners[rule.action];
            let beats = match *slot {
                None => true,
                Some((p, m)) => rule.priority > p || (rule.priority == p && rule.modality.rank() > m.rank()),
            };
            if beats {
                *slot = Some((rule.priority, rule.modality));
            }
        }
        Ok(winners)
    }

    /// Allowed action ids in a non-terminal state, in declaration order.
    pub fn allowed_action_ids(&self, scenario: &Scenario, state: &StateVector) -> Result<Vec<usize>, ModelError> {
        let applicable = scenario.available_action_ids(state)?;
        let winners = self.resolve(scenario, state)?;
        let modality = |a: usize| winners[a].map(|(_, m)| m);
        let obliged: Vec<usize> = applicable
            .iter()
            .copied()
            .filter(|&a| modality(a) == Some(Modality::Oblige))
            .collect();
        if !obliged.is_empty() {
            return Ok(obliged);
        }
        Ok(applicable
            .into_iter()
            .filter(|&a| match (self.stance, modality(a)) {
                (_, Some(Modality::Forbid)) => false,
                (Stance::Permissive, _) => true,
                (Stance::Restrictive, m) => m == Some(Modality::Permit),
            })
            .collect())
    }
}

fn fires(rule: &DeonticRule, state: &StateVector) -> Result<bool, ModelError> {
    match &rule.guard {
        Some(g) => Ok(g.eval_bool(state)?),
        None => Ok(true),
    }
}

fn compile(doc: &ProtocolDocument, scenario: &Scenario, map: &SourceMap) -> Result<Parsed<Protocol>, Vec<Diagnostic>> {
    let mut lw = Lowering::new(map);
    if doc.format_version != FORMAT_VERSION {
        lw.error(
            "/format_version",
            "unsupported-version",
            format!("format_version must be {FORMAT_VERSION}"),
        );
    }
    if doc.name.trim().is_empty() {
        lw.error("/name", "empty-name", "protocol name must not be empty");
    }
    let binder = Binder::new(scenario.variables());
    let mut rules = Vec::with_capacity(doc.rules.len());
    let mut locations = Vec::with_capacity(doc.rules.len());
    for (i, r) in doc.rules.iter().enumerate() {
        let path = format!("/rules/{i}");
        let action = match scenario.action_id(&r.action) {
            Ok(a) => Some(a),
            Err(_) => {
                lw.error(
                    &format!("{path}/action"),
                    "unknown-action",
                    format!("scenario has no action `{}`", r.action),
                );
                None
            }
        };
        let guard = match &r.when {
            Some(text) => match lw.expr(&binder, &format!("{path}/when"), text, Type::Boolean) {
                Some(g) => Some(Some(g)),
                None => None,
            },
            None => Some(None),
        };
        if let (Some(action), Some(guard)) = (action, guard) {
            rules.push(DeonticRule {
                guard,
                action,
                modality: r.modality,
                priority: r.priority,
            });
            locations.push(map.locate(&path));
        }
    }
    if lw.has_errors() {
        return Err(lw.split().0);
    }
    let protocol = Protocol {
        name: doc.name.clone(),
        description: doc.description.clone(),
        stance: doc.stance,
        rules,
        locations,
        scenario_hash: scenario.content_hash().to_string(),
    };
    let (_, warnings) = lw.split();
    Ok(Parsed {
        value: protocol,
        warnings,
    })
}

/// Parses a `*.protocol.json` document against the scenario it restricts.
/// Semantic checks live in [`validate_protocol`].
pub fn parse_protocol(text: &str, scenario: &Scenario) -> Result<Parsed<Protocol>, Vec<Diagnostic>> {
    let map = SourceMap::index(text);
    let doc: ProtocolDocument = read_json(text, &map)?;
    compile(&doc, scenario, &map)
}

pub fn serialize_protocol(protocol: &Protocol, scenario: &Scenario) -> String {
    let mut text = serde_json::to_string_pretty(&protocol.to_document(scenario)).expect("documents always serialise");
    text.push('\n');
    text
}

/// Checks a protocol over every non-terminal state of the scenario.
///
/// Errors: an oblige and a forbid on the same action at equal priority that
/// fire together, and states where the protocol leaves nothing to do.
/// Warnings: rules that never fire where their action applies.
pub fn validate_protocol(scenario: &Scenario, protocol: &Protocol) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if protocol.check(scenario).is_err() {
        out.push(diagnostic(
            Location {
                path: String::new(),
                line: 0,
                column: 0,
            },
            true,
            "scenario-mismatch",
            "protocol was compiled against a different scenario".to_string(),
        ));
        return out;
    }
    let rules = &protocol.rules;
    let mut fired = vec![false; rules.len()];
    let mut conflicts: Vec<Option<StateVector>> = vec![None; rules.len() * rules.len()];
    let mut empty_witness: Option<StateVector> = None;
    let mut eval_failure: Option<(usize, String)> = None;
    for state in scenario.enumerate_states() {
        if !matches!(scenario.is_terminal(&state), Ok(None)) {
            continue;
        }
        let applicable = scenario.available_action_ids(&state).unwrap_or_default();
        if applicable.is_empty() {
            continue;
        }
        let mut active = Vec::new();
        for (i, rule) in rules.iter().enumerate() {
            match fires(rule, &state) {
                Ok(true) => {
                    active.push(i);
                    if applicable.contains(&rule.action) {
                        fired[i] = true;
                    }
                }
                Ok(false) => {}
                Err(e) => {
                    eval_failure.get_or_insert((i, e.to_string()));
                }
            }
        }
        for (x, &i) in active.iter().enumerate() {
            for &j in &active[x + 1..] {
                let (a, b) = (&rules[i], &rules[j]);
                let clash = a.action == b.action
                    && a.priority == b.priority
                    && matches!(
                        (a.modality, b.modality),
                        (Modality::Oblige, Modality::Forbid) | (Modality::Forbid, Modality::Oblige)
                    );
                if clash {
                    conflicts[i * rules.len() + j].get_or_insert_with(|| state.clone());
                }
            }
        }
        if empty_witness.is_none()
            && protocol
                .allowed_action_ids(scenario, &state)
                .is_ok_and(|a| a.is_empty())
        {
            empty_witness = Some(state);
        }
    }
    for i in 0..rules.len() {
        for j in i + 1..rules.len() {
            if let Some(witness) = &conflicts[i * rules.len() + j] {
                out.push(diagnostic(
                    protocol.location(j),
                    true,
                    "conflict",
                    format!(
                        "rules {i} and {j} oblige and forbid `{}` at priority {} together, e.g. in {}",
                        scenario.action_name(rules[i].action),
                        rules[i].priority,
                        scenario.format_state(witness)
                    ),
                ));
            }
        }
    }
    if let Some(witness) = empty_witness {
        out.push(diagnostic(
            Location {
                path: "/rules".to_string(),
                ..protocol.location(0)
            },
            true,
            "no-allowed-action",
            format!("no action is allowed in {}", scenario.format_state(&witness)),
        ));
    }
    if let Some((i, message)) = eval_failure {
        out.push(diagnostic(protocol.location(i), true, "guard-evaluation", message));
    }
    for (i, f) in fired.iter().enumerate() {
        if !f {
            out.push(diagnostic(
                protocol.location(i),
                false,
                "unreachable-rule",
                format!(
                    "rule {i} never fires in a live state where `{}` applies",
                    scenario.action_name(rules[i].action)
                ),
            ));
        }
    }
    out
}

fn diagnostic(location: Location, error: bool, code: &str, message: String) -> Diagnostic {
    Diagnostic {
        severity: if error {
            crate::diagnostic::Severity::Error
        } else {
            crate::diagnostic::Severity::Warning
        },
        code: code.to_string(),
        message,
        location,
    }
}

/// Allowed action names in a non-terminal state.
pub fn allowed_actions<'s>(
    scenario: &'s Scenario,
    protocol: &Protocol,
    state: &StateVector,
) -> Result<Vec<&'s str>, ProtocolError> {
    protocol.check(scenario)?;
    Ok(protocol
        .allowed_action_ids(scenario, state)?
        .into_iter()
        .map(|a| scenario.action_name(a))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSample {
    pub state: Map<String, Value>,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionDelta {
    pub count: usize,
    pub samples: Vec<TransitionSample>,
}

/// How a restricted front sits against the unrestricted one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontRelation {
    /// Fronts equal within the dedup tolerance.
    pub identical: bool,
    /// Restricted vectors not covered by any unrestricted vector. Always
    /// empty for a sound restriction.
    pub uncovered: Vec<ValueVector>,
    /// Unrestricted vectors the protocol can no longer reach.
    pub lost: Vec<ValueVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolEvaluation {
    pub protocol: String,
    pub stance: Stance,
    pub values: Vec<String>,
    pub config: SolveConfig,
    pub reference: ValueVector,
    pub front: Vec<ValueVector>,
    pub hypervolume: f64,
    pub value_maxima: Vec<f64>,
    pub unrestricted_front: Vec<ValueVector>,
    pub unrestricted_hypervolume: f64,
    pub relation: FrontRelation,
    /// Applicable transitions the protocol removes.
    pub removed: TransitionDelta,
    /// Transitions enabled by permits, counted against the empty
    /// whitelist of a restrictive stance. Always zero when permissive.
    pub added: TransitionDelta,
}

/// Default hypervolume reference: the worst cumulative score reachable.
pub fn default_reference(scenario: &Scenario, config: &SolveConfig) -> ValueVector {
    let floor = if config.gamma < 1.0 {
        -1.0 / (1.0 - config.gamma)
    } else {
        -f64::from(config.horizon.unwrap_or(1))
    };
    ValueVector::new(std::iter::repeat_n(floor, scenario.values().len()))
}

fn ensure_valid(scenario: &Scenario, protocol: &Protocol) -> Result<(), ProtocolError> {
    protocol.check(scenario)?;
    let errors: Vec<Diagnostic> = validate_protocol(scenario, protocol)
        .into_iter()
        .filter(Diagnostic::is_error)
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(ProtocolError::Invalid {
            name: protocol.name.clone(),
            diagnostics: errors,
        })
    }
}

/// Initial-state front of the scenario restricted by `protocol`.
pub fn restricted_front(
    scenario: &Scenario,
    protocol: &Protocol,
    config: &SolveConfig,
) -> Result<ParetoSet, ProtocolError> {
    ensure_valid(scenario, protocol)?;
    let solution = pmovi_with(scenario, config, |s| protocol.allowed_action_ids(scenario, s))?;
    Ok(solution.initial_front())
}

pub fn evaluate_protocol(
    scenario: &Scenario,
    protocol: &Protocol,
    config: &SolveConfig,
    reference: Option<&ValueVector>,
) -> Result<ProtocolEvaluation, ProtocolError> {
    let front = restricted_front(scenario, protocol, config)?;
    let base = pmovi(scenario, config)?.initial_front();
    let reference = reference
        .cloned()
        .unwrap_or_else(|| default_reference(scenario, config));
    let tau = config.dedup;

    let uncovered: Vec<ValueVector> = front.iter().filter(|v| !base.covers(v, tau)).cloned().collect();
    let lost: Vec<ValueVector> = base.iter().filter(|v| front.find(v, tau).is_none()).cloned().collect();
    let identical = lost.is_empty() && front.len() == base.len();

    let mut removed = TransitionDelta {
        count: 0,
        samples: Vec::new(),
    };
    let mut added = removed.clone();
    for state in scenario.enumerate_states() {
        if !matches!(scenario.is_terminal(&state), Ok(None)) {
            continue;
        }
        let applicable = scenario.available_action_ids(&state)?;
        let allowed = protocol.allowed_action_ids(scenario, &state)?;
        for &a in &applicable {
            let delta = if !allowed.contains(&a) {
                &mut removed
            } else if protocol.stance == Stance::Restrictive {
                &mut added
            } else {
                continue;
            };
            delta.count += 1;
            if delta.samples.len() < SAMPLE_LIMIT {
                delta.samples.push(TransitionSample {
                    state: state_to_map(scenario, &state),
                    action: scenario.action_name(a).to_string(),
                });
            }
        }
    }

    Ok(ProtocolEvaluation {
        protocol: protocol.name.clone(),
        stance: protocol.stance,
        values: scenario.value_names(),
        config: *config,
        hypervolume: hypervolume(&front, &reference)?,
        unrestricted_hypervolume: hypervolume(&base, &reference)?,
        value_maxima: front.maxima().map(|m| m.to_vec()).unwrap_or_default(),
        reference,
        front: front.into_vec(),
        unrestricted_front: base.into_vec(),
        relation: FrontRelation {
            identical,
            uncovered,
            lost,
        },
        removed,
        added,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolComparison {
    pub a: ProtocolEvaluation,
    pub b: ProtocolEvaluation,
    /// Members of `a`'s front strictly dominated by some member of `b`'s.
    pub a_dominated_by_b: Vec<ValueVector>,
    pub b_dominated_by_a: Vec<ValueVector>,
    /// Every member of `b` is matched or dominated by a member of `a`.
    pub a_covers_b: bool,
    pub b_covers_a: bool,
}

pub fn compare_protocols(
    scenario: &Scenario,
    a: &Protocol,
    b: &Protocol,
    config: &SolveConfig,
    reference: Option<&ValueVector>,
) -> Result<ProtocolComparison, ProtocolError> {
    let a = evaluate_protocol(scenario, a, config, reference)?;
    let b = evaluate_protocol(scenario, b, config, reference)?;
    let tau = config.dedup;
    let dominated = |xs: &[ValueVector], ys: &[ValueVector]| -> Vec<ValueVector> {
        xs.iter()
            .filter(|x| ys.iter().any(|y| y.dominates(x) && y.chebyshev(x) > tau))
            .cloned()
            .collect()
    };
    let covers = |xs: &[ValueVector], ys: &[ValueVector]| ys.iter().all(|y| xs.iter().any(|x| y.covered_by(x, tau)));
    Ok(ProtocolComparison {
        a_dominated_by_b: dominated(&a.front, &b.front),
        b_dominated_by_a: dominated(&b.front, &a.front),
        a_covers_b: covers(&a.front, &b.front),
        b_covers_a: covers(&b.front, &a.front),
        a,
        b,
    })
}

pub const SOP_SAFETY_FIRST_JSON: &str = include_str!("../assets/sop-safety-first.protocol.json");
pub const SOP_RAPID_ENTRY_JSON: &str = include_str!("../assets/sop-rapid-entry.protocol.json");
