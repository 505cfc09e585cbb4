//! Scenario documents (`*.scenario.json`): parsing, validation,
//! canonical serialisation and the shipped scenarios.
//!
//! A document is JSON with `format_version = 1`. Guards and scores are
//! expression text (see [`crate::expr`]); probabilities are exact
//! rationals written as strings such as `"7/10"`.

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostic::{pointer_segment, Diagnostic, Parsed, Severity, SourceMap};
use crate::expr::{Binder, Expr, ExprError, Type, Value};
use crate::model::{
    Action, AlignmentRules, Assignment, EffectRule, Outcome, Probability, Scenario, ScoreCase, StateVector,
    TerminalLabel, TerminalSpec, Update, ValueSpec, Variable,
};

pub const FORMAT_VERSION: u32 = 1;

/// Largest state space the engine will accept.
pub const MAX_STATES: usize = 1 << 24;

// ---------------------------------------------------------------------------
// Wire types

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub format_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub variables: Vec<VariableDoc>,
    pub initial_state: BTreeMapOrdered,
    pub actions: Vec<ActionDoc>,
    pub values: Vec<ValueDoc>,
    pub terminals: Vec<TerminalDoc>,
}

/// Variable → level name, kept in document order.
pub type BTreeMapOrdered = serde_json::Map<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableDoc {
    pub name: String,
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionDoc {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applicable: Option<String>,
    pub outcomes: Vec<OutcomeDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeDoc {
    pub probability: NumberOrText,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<EffectDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    pub assign: Vec<AssignmentDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentDoc {
    pub variable: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increment: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decrement: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueDoc {
    pub name: String,
    pub rules: Vec<RuleSetDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSetDoc {
    pub action: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cases: Vec<CaseDoc>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub default: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    pub score: NumberOrText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalDoc {
    pub when: String,
    pub label: TerminalLabel,
}

/// A JSON number or a string, for fields that accept either.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberOrText {
    Number(serde_json::Number),
    Text(String),
}

impl NumberOrText {
    fn text(&self) -> String {
        match self {
            NumberOrText::Number(n) => n.to_string(),
            NumberOrText::Text(s) => s.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Probabilities

/// Parses `"n/d"`, an integer, or a decimal such as `"0.7"` exactly.
pub fn parse_probability(text: &str) -> Option<Probability> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: i64 = n.trim().parse().ok()?;
        let d: i64 = d.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        return Some(Ratio::new(n, d));
    }
    if let Some((int, frac)) = text.split_once('.') {
        if frac.is_empty() || frac.len() > 15 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let int: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
        let scale = 10i64.pow(frac.len() as u32);
        let frac: i64 = frac.parse().ok()?;
        return Some(Ratio::new(int.checked_mul(scale)?.checked_add(frac)?, scale));
    }
    text.parse::<i64>().ok().map(Ratio::from_integer)
}

pub fn render_probability(p: &Probability) -> String {
    if *p.denom() == 1 {
        p.numer().to_string()
    } else {
        format!("{}/{}", p.numer(), p.denom())
    }
}

// ---------------------------------------------------------------------------
// Compilation

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(name, "and" | "or" | "not" | "true" | "false")
}

/// Accumulates diagnostics while lowering a document.
pub(crate) struct Lowering<'a> {
    pub(crate) map: &'a SourceMap,
    pub(crate) diagnostics: Vec<Diagnostic>,
}

impl<'a> Lowering<'a> {
    pub(crate) fn new(map: &'a SourceMap) -> Self {
        Lowering {
            map,
            diagnostics: Vec::new(),
        }
    }

    pub(crate) fn error(&mut self, path: &str, code: &str, message: impl Into<String>) {
        self.diagnostics.push(self.map.error(path, code, message));
    }

    pub(crate) fn warning(&mut self, path: &str, code: &str, message: impl Into<String>) {
        self.diagnostics.push(self.map.warning(path, code, message));
    }

    pub(crate) fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(Diagnostic::is_error)
    }

    fn expr_error(&mut self, path: &str, err: ExprError) {
        self.diagnostics.push(Diagnostic {
            severity: Severity::Error,
            code: err.code.to_string(),
            message: err.message,
            location: self.map.locate_in_string(path, err.span.start),
        });
    }

    pub(crate) fn expr(&mut self, binder: &Binder, path: &str, text: &str, ty: Type) -> Option<Expr> {
        match binder.bind_text(text, ty) {
            Ok(expr) => Some(expr),
            Err(err) => {
                self.expr_error(path, err);
                None
            }
        }
    }

    pub(crate) fn split(self) -> (Vec<Diagnostic>, Vec<Diagnostic>) {
        self.diagnostics.into_iter().partition(Diagnostic::is_error)
    }
}

fn lower_variables(lw: &mut Lowering, docs: &[VariableDoc]) -> Vec<Variable> {
    if docs.is_empty() {
        lw.error("/variables", "no-variables", "a scenario needs at least one variable");
    }
    let mut seen = HashSet::new();
    for (i, v) in docs.iter().enumerate() {
        let path = format!("/variables/{i}");
        if !is_identifier(&v.name) {
            lw.error(
                &format!("{path}/name"),
                "bad-name",
                format!("`{}` is not a valid identifier", v.name),
            );
        }
        if !seen.insert(v.name.as_str()) {
            lw.error(
                &format!("{path}/name"),
                "duplicate-variable",
                format!("variable `{}` is declared twice", v.name),
            );
        }
        if v.levels.is_empty() {
            lw.error(
                &format!("{path}/levels"),
                "empty-domain",
                format!("variable `{}` has no levels", v.name),
            );
        }
        if v.levels.len() > u16::MAX as usize {
            lw.error(&format!("{path}/levels"), "domain-too-large", "too many levels");
        }
        let mut levels = HashSet::new();
        for (j, level) in v.levels.iter().enumerate() {
            let lpath = format!("{path}/levels/{j}");
            if level.is_empty() {
                lw.error(&lpath, "bad-level", "level names must be non-empty");
            }
            if !levels.insert(level.as_str()) {
                lw.error(
                    &lpath,
                    "duplicate-level",
                    format!("level `{level}` repeats in `{}`", v.name),
                );
            }
            if docs.iter().any(|other| &other.name == level) {
                lw.error(
                    &lpath,
                    "ambiguous-level",
                    format!("level `{level}` shadows a variable name"),
                );
            }
        }
    }
    let count = docs
        .iter()
        .try_fold(1usize, |acc, v| acc.checked_mul(v.levels.len().max(1)));
    if count.is_none_or(|c| c > MAX_STATES) {
        lw.error(
            "/variables",
            "state-space-too-large",
            format!("more than {MAX_STATES} states"),
        );
    }
    docs.iter()
        .map(|v| Variable::new(v.name.clone(), v.levels.iter().cloned()))
        .collect()
}

fn lower_initial(lw: &mut Lowering, variables: &[Variable], doc: &BTreeMapOrdered) -> StateVector {
    let mut levels = vec![0u16; variables.len()];
    for (key, level) in doc {
        let path = format!("/initial_state/{}", pointer_segment(key));
        let Some(vi) = variables.iter().position(|v| &v.name == key) else {
            lw.error(&path, "unknown-variable", format!("unknown variable `{key}`"));
            continue;
        };
        let Some(name) = level.as_str() else {
            lw.error(&path, "bad-level", "initial levels are level-name strings");
            continue;
        };
        match variables[vi].level_index(name) {
            Some(li) => levels[vi] = li as u16,
            None => lw.error(&path, "unknown-level", format!("`{name}` is not a level of `{key}`")),
        }
    }
    for v in variables {
        if !doc.contains_key(&v.name) {
            lw.error(
                "/initial_state",
                "missing-initial",
                format!("initial_state has no entry for `{}`", v.name),
            );
        }
    }
    StateVector::new(levels)
}

fn lower_assignment(lw: &mut Lowering, variables: &[Variable], path: &str, doc: &AssignmentDoc) -> Option<Assignment> {
    let Some(var) = variables.iter().position(|v| v.name == doc.variable) else {
        lw.error(
            &format!("{path}/variable"),
            "unknown-variable",
            format!("unknown variable `{}`", doc.variable),
        );
        return None;
    };
    let update = match (&doc.set, doc.increment, doc.decrement) {
        (Some(level), None, None) => match variables[var].level_index(level) {
            Some(li) => Update::Set(li as u16),
            None => {
                lw.error(
                    &format!("{path}/set"),
                    "unknown-level",
                    format!("`{level}` is not a level of `{}`", doc.variable),
                );
                return None;
            }
        },
        (None, Some(k), None) => Update::Increment(k),
        (None, None, Some(k)) => Update::Decrement(k),
        _ => {
            lw.error(
                path,
                "bad-assignment",
                "an assignment needs exactly one of `set`, `increment`, `decrement`",
            );
            return None;
        }
    };
    if matches!(update, Update::Increment(0) | Update::Decrement(0)) {
        lw.warning(path, "no-op-assignment", "step of 0 has no effect");
    }
    Some(Assignment { var, update })
}

fn lower_actions(lw: &mut Lowering, binder: &Binder, variables: &[Variable], docs: &[ActionDoc]) -> Vec<Action> {
    if docs.is_empty() {
        lw.error("/actions", "no-actions", "a scenario needs at least one action");
    }
    let mut seen = HashSet::new();
    let mut actions = Vec::new();
    for (i, a) in docs.iter().enumerate() {
        let path = format!("/actions/{i}");
        if !is_identifier(&a.name) {
            lw.error(
                &format!("{path}/name"),
                "bad-name",
                format!("`{}` is not a valid identifier", a.name),
            );
        }
        if !seen.insert(a.name.as_str()) {
            lw.error(
                &format!("{path}/name"),
                "duplicate-action",
                format!("action `{}` is declared twice", a.name),
            );
        }
        let applicable = a
            .applicable
            .as_ref()
            .and_then(|text| lw.expr(binder, &format!("{path}/applicable"), text, Type::Boolean));
        if a.outcomes.is_empty() {
            lw.error(
                &format!("{path}/outcomes"),
                "no-outcomes",
                format!("action `{}` has no outcomes", a.name),
            );
        }
        let mut outcomes = Vec::new();
        let mut total = Probability::zero();
        let mut probabilities_ok = true;
        for (j, o) in a.outcomes.iter().enumerate() {
            let opath = format!("{path}/outcomes/{j}");
            let probability = match parse_probability(&o.probability.text()) {
                Some(p) if p > Probability::zero() && p <= Probability::one() => p,
                _ => {
                    lw.error(
                        &format!("{opath}/probability"),
                        "bad-probability",
                        format!("`{}` is not a probability in (0, 1]", o.probability.text()),
                    );
                    probabilities_ok = false;
                    Probability::one()
                }
            };
            total += probability;
            let mut effects = Vec::new();
            for (k, e) in o.effects.iter().enumerate() {
                let epath = format!("{opath}/effects/{k}");
                let guard = e
                    .when
                    .as_ref()
                    .and_then(|text| lw.expr(binder, &format!("{epath}/when"), text, Type::Boolean));
                let assignments = e
                    .assign
                    .iter()
                    .enumerate()
                    .filter_map(|(m, doc)| lower_assignment(lw, variables, &format!("{epath}/assign/{m}"), doc))
                    .collect();
                effects.push(EffectRule { guard, assignments });
            }
            outcomes.push(Outcome { probability, effects });
        }
        if probabilities_ok && !a.outcomes.is_empty() && total != Probability::one() {
            lw.error(
                &format!("{path}/outcomes"),
                "probability-sum",
                format!(
                    "outcome probabilities of `{}` sum to {}, not 1",
                    a.name,
                    render_probability(&total)
                ),
            );
        }
        actions.push(Action {
            name: a.name.clone(),
            applicable,
            outcomes,
        });
    }
    actions
}

fn lower_values(lw: &mut Lowering, binder: &Binder, actions: &[Action], docs: &[ValueDoc]) -> Vec<ValueSpec> {
    if docs.is_empty() {
        lw.error("/values", "no-values", "a scenario needs at least one value");
    }
    let mut seen = HashSet::new();
    let mut values = Vec::new();
    for (i, v) in docs.iter().enumerate() {
        let path = format!("/values/{i}");
        if !is_identifier(&v.name) {
            lw.error(
                &format!("{path}/name"),
                "bad-name",
                format!("`{}` is not a valid identifier", v.name),
            );
        }
        if !seen.insert(v.name.as_str()) {
            lw.error(
                &format!("{path}/name"),
                "duplicate-value",
                format!("value `{}` is declared twice", v.name),
            );
        }
        let mut slots: Vec<Option<AlignmentRules>> = vec![None; actions.len()];
        for (j, r) in v.rules.iter().enumerate() {
            let rpath = format!("{path}/rules/{j}");
            let Some(action) = actions.iter().position(|a| a.name == r.action) else {
                lw.error(
                    &format!("{rpath}/action"),
                    "unknown-action",
                    format!("unknown action `{}`", r.action),
                );
                continue;
            };
            if slots[action].is_some() {
                lw.error(
                    &format!("{rpath}/action"),
                    "duplicate-rules",
                    format!("`{}` already has rules for `{}`", v.name, r.action),
                );
                continue;
            }
            if !(-1.0..=1.0).contains(&r.default) {
                lw.warning(
                    &format!("{rpath}/default"),
                    "score-out-of-range",
                    format!("default {} will clamp to [-1, 1]", r.default),
                );
            }
            let mut cases = Vec::new();
            for (k, c) in r.cases.iter().enumerate() {
                let cpath = format!("{rpath}/cases/{k}");
                let guard = c
                    .when
                    .as_ref()
                    .and_then(|text| lw.expr(binder, &format!("{cpath}/when"), text, Type::Boolean));
                let Some(score) = lw.expr(binder, &format!("{cpath}/score"), &c.score.text(), Type::Number) else {
                    continue;
                };
                if let Some(Value::Number(s)) = score.constant() {
                    if !(-1.0..=1.0).contains(&s) {
                        lw.warning(
                            &format!("{cpath}/score"),
                            "score-out-of-range",
                            format!("score {s} will clamp to [-1, 1]"),
                        );
                    }
                }
                cases.push(ScoreCase { guard, score });
            }
            slots[action] = Some(AlignmentRules {
                cases,
                default: r.default,
            });
        }
        let mut rules = Vec::new();
        for (a, slot) in slots.into_iter().enumerate() {
            match slot {
                Some(r) => rules.push(r),
                None => {
                    lw.error(
                        &format!("{path}/rules"),
                        "missing-rules",
                        format!("value `{}` has no rules for action `{}`", v.name, actions[a].name),
                    );
                }
            }
        }
        values.push(ValueSpec {
            name: v.name.clone(),
            rules,
        });
    }
    values
}

/// Lowers a deserialised document into a model.
pub fn compile(doc: &ScenarioDocument, map: &SourceMap) -> Result<Parsed<Scenario>, Vec<Diagnostic>> {
    let mut lw = Lowering::new(map);
    if doc.format_version != FORMAT_VERSION {
        lw.error(
            "/format_version",
            "unsupported-version",
            format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                doc.format_version
            ),
        );
    }
    if doc.name.trim().is_empty() {
        lw.error("/name", "bad-name", "scenario name must be non-empty");
    }
    let variables = lower_variables(&mut lw, &doc.variables);
    if lw.has_errors() {
        return Err(lw.split().0);
    }
    let binder = Binder::new(&variables);
    let initial = lower_initial(&mut lw, &variables, &doc.initial_state);
    let actions = lower_actions(&mut lw, &binder, &variables, &doc.actions);
    let values = lower_values(&mut lw, &binder, &actions, &doc.values);
    if doc.terminals.is_empty() {
        lw.error(
            "/terminals",
            "no-terminals",
            "a scenario needs at least one terminal condition",
        );
    }
    let terminals: Vec<TerminalSpec> = doc
        .terminals
        .iter()
        .enumerate()
        .filter_map(|(i, t)| {
            lw.expr(&binder, &format!("/terminals/{i}/when"), &t.when, Type::Boolean)
                .map(|condition| TerminalSpec {
                    condition,
                    label: t.label,
                })
        })
        .collect();
    if lw.has_errors() {
        return Err(lw.split().0);
    }
    let mut scenario = Scenario {
        name: doc.name.clone(),
        description: doc.description.clone(),
        variables,
        initial,
        actions,
        values,
        terminals,
        hash: String::new(),
    };
    match scenario.is_terminal(&scenario.initial) {
        Ok(Some(label)) => lw.warning(
            "/initial_state",
            "terminal-initial-state",
            format!("initial state is already terminal ({label})"),
        ),
        Ok(None) => {}
        Err(e) => lw.error("/terminals", "evaluation-error", e.to_string()),
    }
    if lw.has_errors() {
        return Err(lw.split().0);
    }
    scenario.hash = hash_text(&serialize_scenario(&scenario));
    Ok(Parsed {
        value: scenario,
        warnings: lw.split().1,
    })
}

/// Deserialises JSON text, reporting syntax and shape errors with their
/// line and column.
pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(text: &str, map: &SourceMap) -> Result<T, Vec<Diagnostic>> {
    serde_json::from_str(text).map_err(|e| {
        let mut loc = map.locate("");
        loc.line = e.line().max(1);
        loc.column = e.column().max(1);
        let code = match e.classify() {
            serde_json::error::Category::Syntax | serde_json::error::Category::Eof => "json-syntax",
            _ => "schema",
        };
        vec![Diagnostic {
            severity: Severity::Error,
            code: code.to_string(),
            message: e.to_string(),
            location: loc,
        }]
    })
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Parsed<Scenario>, Vec<Diagnostic>> {
    let map = SourceMap::index(text);
    let doc: ScenarioDocument = read_json(text, &map)?;
    compile(&doc, &map)
}

// ---------------------------------------------------------------------------
// Serialisation

fn render_opt(expr: &Option<Expr>, variables: &[Variable]) -> Option<String> {
    expr.as_ref().map(|e| e.render(variables))
}

/// The document form of a model, with expressions re-rendered from their
/// syntax trees.
pub fn to_document(model: &Scenario) -> ScenarioDocument {
    let vars = &model.variables;
    ScenarioDocument {
        format_version: FORMAT_VERSION,
        name: model.name.clone(),
        description: model.description.clone(),
        variables: vars
            .iter()
            .map(|v| VariableDoc {
                name: v.name.clone(),
                levels: v.levels.clone(),
            })
            .collect(),
        initial_state: model
            .describe_state(&model.initial)
            .map(|(v, l)| (v.to_string(), serde_json::Value::String(l.to_string())))
            .collect(),
        actions: model
            .actions
            .iter()
            .map(|a| ActionDoc {
                name: a.name.clone(),
                applicable: render_opt(&a.applicable, vars),
                outcomes: a
                    .outcomes
                    .iter()
                    .map(|o| OutcomeDoc {
                        probability: NumberOrText::Text(render_probability(&o.probability)),
                        effects: o
                            .effects
                            .iter()
                            .map(|e| EffectDoc {
                                when: render_opt(&e.guard, vars),
                                assign: e
                                    .assignments
                                    .iter()
                                    .map(|asg| {
                                        let mut doc = AssignmentDoc {
                                            variable: vars[asg.var].name.clone(),
                                            set: None,
                                            increment: None,
                                            decrement: None,
                                        };
                                        match asg.update {
                                            Update::Set(l) => doc.set = Some(vars[asg.var].levels[l as usize].clone()),
                                            Update::Increment(k) => doc.increment = Some(k),
                                            Update::Decrement(k) => doc.decrement = Some(k),
                                        }
                                        doc
                                    })
                                    .collect(),
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
        values: model
            .values
            .iter()
            .map(|v| ValueDoc {
                name: v.name.clone(),
                rules: v
                    .rules
                    .iter()
                    .zip(&model.actions)
                    .map(|(r, a)| RuleSetDoc {
                        action: a.name.clone(),
                        cases: r
                            .cases
                            .iter()
                            .map(|c| CaseDoc {
                                when: render_opt(&c.guard, vars),
                                score: NumberOrText::Text(c.score.render(vars)),
                            })
                            .collect(),
                        default: r.default,
                    })
                    .collect(),
            })
            .collect(),
        terminals: model
            .terminals
            .iter()
            .map(|t| TerminalDoc {
                when: t.condition.render(vars),
                label: t.label,
            })
            .collect(),
    }
}

/// Canonical document text: stable key order, two-space indent, trailing
/// newline.
pub fn serialize_scenario(model: &Scenario) -> String {
    let mut text = serde_json::to_string_pretty(&to_document(model)).expect("documents always serialise");
    text.push('\n');
    text
}

pub(crate) fn hash_text(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

// ---------------------------------------------------------------------------
// Shipped scenarios

pub const FIREFIGHT_JSON: &str = include_str!("../assets/firefight.scenario.json");
pub const FIREFIGHT_STOCHASTIC_JSON: &str = include_str!("../assets/firefight-stochastic.scenario.json");

fn cached(cell: &'static OnceLock<Scenario>, text: &str) -> Scenario {
    cell.get_or_init(|| match parse_scenario(text) {
        Ok(parsed) => parsed.value,
        Err(diags) => panic!("shipped scenario is invalid: {diags:?}"),
    })
    .clone()
}

/// The canonical firefighting scenario: five variables (400 states), five
/// actions, Professionalism and Proximity.
pub fn builtin_firefight() -> Scenario {
    static CELL: OnceLock<Scenario> = OnceLock::new();
    cached(&CELL, FIREFIGHT_JSON)
}

/// Variant where containment only succeeds some of the time.
pub fn builtin_firefight_stochastic() -> Scenario {
    static CELL: OnceLock<Scenario> = OnceLock::new();
    cached(&CELL, FIREFIGHT_STOCHASTIC_JSON)
}

/// Shipped scenarios by registry name.
pub fn shipped_scenarios() -> BTreeMap<&'static str, Scenario> {
    BTreeMap::from([
        ("firefight", builtin_firefight()),
        ("firefight-stochastic", builtin_firefight_stochastic()),
    ])
}

/// The firefighting scenario with a smaller occupancy domain
/// `{0, .., max_occupancy}` and that many initial occupants.
pub fn firefight_with_occupancy(max_occupancy: u16) -> Scenario {
    let mut doc: ScenarioDocument = serde_json::from_str(FIREFIGHT_JSON).expect("shipped document parses");
    doc.name = format!("firefight-occ{max_occupancy}");
    for v in &mut doc.variables {
        if v.name == "occupancy" {
            v.levels = (0..=max_occupancy).map(|i| i.to_string()).collect();
        }
    }
    doc.initial_state
        .insert("occupancy".into(), serde_json::Value::String(max_occupancy.to_string()));
    match compile(&doc, &SourceMap::default()) {
        Ok(parsed) => parsed.value,
        Err(diags) => panic!("reduced scenario is invalid: {diags:?}"),
    }
}
