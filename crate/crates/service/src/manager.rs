use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::http::StatusCode;
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use chrono::{SecondsFormat, Utc};
use parking_lot::{Mutex, RwLock};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use valence_core::assessment::{build_report, Episode, EpisodeError};
use valence_core::model::Scenario;
use valence_core::protocol::default_reference;
use valence_core::scenario::shipped_scenarios;
use valence_core::solver::{hypervolume, pmovi, read_front, write_front, SolutionFront, SolveConfig};
use valence_core::value::ValueVector;

use crate::error::ApiError;
use crate::events::{read_log, EventBody, EventLog, EventRecord, LogError, LOG_SUFFIX};
use crate::session::{Session, SessionConfig, SessionView};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub scenario: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config: Option<SessionConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRequest {
    pub action: String,
    #[serde(default)]
    pub idempotency_key: Option<String>,
    /// Step count the client saw; the request is refused if the session
    /// has moved on since.
    #[serde(default)]
    pub expected_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub name: String,
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub hash: String,
    pub description: Option<String>,
    pub variables: Vec<VariableSummary>,
    pub actions: Vec<String>,
    pub values: Vec<String>,
    pub stochastic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontSummary {
    pub scenario: String,
    pub scenario_hash: String,
    pub values: Vec<String>,
    pub config: SolveConfig,
    pub sweeps: usize,
    pub converged: bool,
    /// Set when the per-state vector cap dropped front members.
    pub approximate: bool,
    pub front: Vec<ValueVector>,
    pub value_maxima: Vec<f64>,
    pub reference: ValueVector,
    pub hypervolume: f64,
}

/// A session log that could not be replayed.
#[derive(Debug, Clone)]
pub struct Skipped {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct FrontKey {
    gamma_bits: u64,
    horizon: u32,
}

type FrontSlot = Arc<OnceLock<Result<Arc<SolutionFront>, String>>>;

/// Live sessions, their logs and the solved fronts reports need.
pub struct SessionManager {
    data_dir: PathBuf,
    durable: bool,
    scenarios: BTreeMap<String, Arc<Scenario>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    fronts: Mutex<HashMap<(String, FrontKey), FrontSlot>>,
    skipped: Vec<Skipped>,
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn new_id() -> String {
    let bytes: [u8; 16] = rand::rng().random();
    URL_SAFE_NO_PAD.encode(bytes)
}

fn log_error(e: LogError) -> ApiError {
    ApiError::internal(format!("event log: {e}"))
}

impl SessionManager {
    /// Opens `data_dir` with the shipped scenarios, replaying every
    /// session log found there.
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self, std::io::Error> {
        Self::open_with(
            data_dir,
            shipped_scenarios().into_iter().map(|(k, v)| (k.to_string(), v)),
            true,
        )
    }

    /// As [`open`](Self::open) with an explicit scenario registry. With
    /// `durable` off, log writes skip the fsync.
    pub fn open_with(
        data_dir: impl Into<PathBuf>,
        scenarios: impl IntoIterator<Item = (String, Scenario)>,
        durable: bool,
    ) -> Result<Self, std::io::Error> {
        let data_dir = data_dir.into();
        std::fs::create_dir_all(&data_dir)?;
        let mut manager = SessionManager {
            data_dir,
            durable,
            scenarios: scenarios.into_iter().map(|(k, v)| (k, Arc::new(v))).collect(),
            sessions: RwLock::new(HashMap::new()),
            fronts: Mutex::new(HashMap::new()),
            skipped: Vec::new(),
        };
        manager.recover()?;
        Ok(manager)
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    /// Logs that failed to replay when the manager opened.
    pub fn skipped(&self) -> &[Skipped] {
        &self.skipped
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn scenario(&self, name: &str) -> Result<&Arc<Scenario>, ApiError> {
        self.scenarios.get(name).ok_or_else(|| ApiError::unknown_scenario(name))
    }

    pub fn scenarios(&self) -> Vec<ScenarioSummary> {
        self.scenarios
            .iter()
            .map(|(name, s)| ScenarioSummary {
                name: name.clone(),
                hash: s.content_hash().to_string(),
                description: s.description().map(String::from),
                variables: s
                    .variables()
                    .iter()
                    .map(|v| VariableSummary {
                        name: v.name.clone(),
                        levels: v.levels.clone(),
                    })
                    .collect(),
                actions: s.actions().iter().map(|a| a.name.clone()).collect(),
                values: s.value_names(),
                stochastic: s.is_stochastic(),
            })
            .collect()
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.data_dir.join(format!("{id}{LOG_SUFFIX}"))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    pub fn create(&self, request: CreateSession) -> Result<SessionView, ApiError> {
        let scenario = self.scenario(&request.scenario)?.clone();
        let config = request.config.unwrap_or_default();
        config.validate().map_err(ApiError::bad_request)?;
        // stay inside the range a JSON number carries exactly
        let seed = request.seed.unwrap_or_else(|| rand::rng().random_range(0..1u64 << 53));
        let id = new_id();
        let at = now();
        let mut log = EventLog::create(self.log_path(&id), self.durable).map_err(log_error)?;
        log.append(&[EventRecord {
            session: id.clone(),
            seq: 0,
            at: at.clone(),
            body: EventBody::Created {
                scenario: request.scenario.clone(),
                scenario_hash: scenario.content_hash().to_string(),
                seed,
                gamma: config.gamma,
                horizon: config.horizon,
                reveal: config.reveal,
            },
        }])
        .map_err(log_error)?;
        let session = Session {
            id: id.clone(),
            scenario_name: request.scenario,
            episode: Episode::new(scenario, seed, config.gamma, Some(config.horizon)),
            config,
            created_at: at.clone(),
            updated_at: at,
            next_seq: 1,
            replies: HashMap::new(),
            reports: HashMap::new(),
            log,
        };
        let view = session.view();
        self.sessions.write().insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    pub fn view(&self, id: &str) -> Result<SessionView, ApiError> {
        Ok(self.session(id)?.lock().view())
    }

    /// Applies one action and returns the response body. Steps on one
    /// session are serialised by its lock; the event is on disk before
    /// this returns.
    pub fn apply(&self, id: &str, request: ActionRequest) -> Result<String, ApiError> {
        let slot = self.session(id)?;
        let mut session = slot.lock();
        if let Some(key) = &request.idempotency_key {
            if let Some((action, body)) = session.replies.get(key) {
                if *action != request.action {
                    return Err(ApiError::new(
                        StatusCode::UNPROCESSABLE_ENTITY,
                        "idempotency-conflict",
                        format!("key `{key}` was already used for `{action}`"),
                    ));
                }
                return Ok(body.clone());
            }
        }
        if let Some(outcome) = session.episode.outcome() {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "session-finished",
                format!("session finished ({outcome})"),
            )
            .with_details(json!({ "outcome": outcome })));
        }
        let actual = session.episode.steps().len();
        if let Some(expected) = request.expected_step {
            if expected != actual {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "stale-step",
                    format!("expected step {expected} but the session is at step {actual}"),
                )
                .with_details(json!({ "expected_step": expected, "step": actual })));
            }
        }
        let available: Vec<String> = session
            .episode
            .available_actions()
            .into_iter()
            .map(String::from)
            .collect();
        if !available.contains(&request.action) {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "action-unavailable",
                format!("`{}` is not available here", request.action),
            )
            .with_details(json!({ "available": available })));
        }

        // step a copy so a failed write leaves the session untouched
        let mut episode = session.episode.clone();
        episode.apply(&request.action).map_err(|e| match e {
            EpisodeError::Finished(_) => ApiError::new(StatusCode::CONFLICT, "session-finished", e.to_string()),
            EpisodeError::Model(m) => ApiError::internal(m.to_string()),
        })?;
        let at = now();
        let seq = session.next_seq;
        let mut records = vec![EventRecord {
            session: id.to_string(),
            seq,
            at: at.clone(),
            body: EventBody::Action {
                step: actual,
                action: request.action.clone(),
                idempotency_key: request.idempotency_key.clone(),
            },
        }];
        if let Some(outcome) = episode.outcome() {
            records.push(EventRecord {
                session: id.to_string(),
                seq: seq + 1,
                at: at.clone(),
                body: EventBody::Finished { outcome },
            });
        }
        session.log.append(&records).map_err(log_error)?;
        session.next_seq += records.len() as u64;
        session.episode = episode;
        session.updated_at = at;
        let body = session.action_body();
        if let Some(key) = request.idempotency_key {
            session.replies.insert(key, (request.action, body.clone()));
        }
        Ok(body)
    }

    /// Trajectory of a session as JSONL. Blind sessions only hand it out
    /// once finished, since it carries alignment scores.
    pub fn trajectory(&self, id: &str) -> Result<String, ApiError> {
        let slot = self.session(id)?;
        let session = slot.lock();
        if !session.config.reveal && !session.episode.is_finished() {
            return Err(session_active());
        }
        Ok(session.episode.trajectory().to_jsonl(session.episode.scenario()))
    }

    pub fn report(&self, id: &str, weights: Option<Vec<f64>>) -> Result<String, ApiError> {
        let slot = self.session(id)?;
        let key = weights
            .as_ref()
            .map(|w| w.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(","))
            .unwrap_or_default();
        let (scenario, trajectory, config) = {
            let session = slot.lock();
            if !session.episode.is_finished() {
                return Err(session_active());
            }
            if let Some(body) = session.reports.get(&key) {
                return Ok(body.clone());
            }
            (
                session.episode.scenario().clone(),
                session.episode.trajectory(),
                session.config,
            )
        };
        if let Some(w) = &weights {
            if w.len() != scenario.values().len() {
                return Err(ApiError::bad_request(format!(
                    "expected {} weights, got {}",
                    scenario.values().len(),
                    w.len()
                )));
            }
        }
        let solution = self.solution(&scenario, config.gamma, config.horizon)?;
        let report = build_report(&scenario, &trajectory, &solution, weights.as_deref())
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let body = report.to_json();
        slot.lock().reports.entry(key).or_insert(body.clone());
        Ok(body)
    }

    pub fn front(&self, name: &str, gamma: f64, horizon: u32) -> Result<FrontSummary, ApiError> {
        let scenario = self.scenario(name)?.clone();
        SessionConfig {
            gamma,
            horizon,
            reveal: false,
        }
        .validate()
        .map_err(ApiError::bad_request)?;
        let solution = self.solution(&scenario, gamma, horizon)?;
        let front = solution.initial_front();
        let reference = default_reference(&scenario, solution.config());
        Ok(FrontSummary {
            scenario: name.to_string(),
            scenario_hash: scenario.content_hash().to_string(),
            values: scenario.value_names(),
            config: *solution.config(),
            sweeps: solution.sweeps(),
            converged: solution.converged(),
            approximate: solution.approximate(),
            value_maxima: front.maxima().map(|m| m.to_vec()).unwrap_or_default(),
            hypervolume: hypervolume(&front, &reference).map_err(|e| ApiError::internal(e.to_string()))?,
            reference,
            front: front.into_vec(),
        })
    }

    /// Solved front for `(scenario, gamma, horizon)`, from memory, then
    /// disk, then the solver. Concurrent callers share one solve.
    pub fn solution(&self, scenario: &Scenario, gamma: f64, horizon: u32) -> Result<Arc<SolutionFront>, ApiError> {
        let key = FrontKey {
            gamma_bits: gamma.to_bits(),
            horizon,
        };
        let slot = self
            .fronts
            .lock()
            .entry((scenario.content_hash().to_string(), key))
            .or_default()
            .clone();
        slot.get_or_init(|| self.load_or_solve(scenario, gamma, horizon).map(Arc::new))
            .clone()
            .map_err(ApiError::internal)
    }

    fn front_path(&self, scenario: &Scenario, gamma: f64, horizon: u32) -> PathBuf {
        let hash = &scenario.content_hash()[..16];
        self.data_dir
            .join("fronts")
            .join(format!("{hash}-g{gamma}-h{horizon}.front.json"))
    }

    fn load_or_solve(&self, scenario: &Scenario, gamma: f64, horizon: u32) -> Result<SolutionFront, String> {
        let path = self.front_path(scenario, gamma, horizon);
        if let Ok(text) = std::fs::read_to_string(&path) {
            match read_front(&text, scenario) {
                Ok(solution) => return Ok(solution),
                Err(e) => tracing::warn!("ignoring cached front {}: {e}", path.display()),
            }
        }
        let config = SolveConfig {
            gamma,
            horizon: Some(horizon),
            ..SolveConfig::for_scenario(scenario)
        };
        let solution = pmovi(scenario, &config).map_err(|e| e.to_string())?;
        let write = || -> std::io::Result<()> {
            std::fs::create_dir_all(path.parent().expect("front paths have a parent"))?;
            let tmp = path.with_extension(format!("tmp{}", std::process::id()));
            std::fs::write(&tmp, write_front(&solution, scenario))?;
            std::fs::rename(&tmp, &path)
        };
        if let Err(e) = write() {
            tracing::warn!("could not cache front at {}: {e}", path.display());
        }
        Ok(solution)
    }

    fn recover(&mut self) -> Result<(), std::io::Error> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&self.data_dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.ends_with(LOG_SUFFIX))
            })
            .collect();
        paths.sort();
        let mut sessions = HashMap::new();
        for path in paths {
            match self.replay(&path) {
                Ok(session) => {
                    sessions.insert(session.id.clone(), Arc::new(Mutex::new(session)));
                }
                Err(reason) => {
                    tracing::warn!("skipping {}: {reason}", path.display());
                    self.skipped.push(Skipped { path, reason });
                }
            }
        }
        *self.sessions.get_mut() = sessions;
        Ok(())
    }

    /// Rebuilds one session from its log. A torn final line is cut off; a
    /// finished event lost to a crash is written back.
    fn replay(&self, path: &Path) -> Result<Session, String> {
        let contents = read_log(path).map_err(|e| e.to_string())?;
        let mut records = contents.records.into_iter();
        let first = records.next().ok_or("log holds no complete record")?;
        let EventBody::Created {
            scenario: name,
            scenario_hash,
            seed,
            gamma,
            horizon,
            reveal,
        } = first.body
        else {
            return Err("log does not start with a created event".into());
        };
        if first.seq != 0 {
            return Err("first event must have sequence 0".into());
        }
        let expected_name = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix(LOG_SUFFIX))
            .unwrap_or_default();
        if first.session != expected_name {
            return Err(format!("log names session `{}`", first.session));
        }
        let scenario = self
            .scenarios
            .get(&name)
            .ok_or_else(|| format!("unknown scenario `{name}`"))?
            .clone();
        if scenario.content_hash() != scenario_hash {
            return Err(format!("scenario `{name}` has changed since the session started"));
        }
        let config = SessionConfig { gamma, horizon, reveal };
        let log = EventLog::reopen(path.to_path_buf(), contents.valid_len, self.durable).map_err(|e| e.to_string())?;
        let mut session = Session {
            id: first.session.clone(),
            scenario_name: name,
            episode: Episode::new(scenario, seed, gamma, Some(horizon)),
            config,
            created_at: first.at.clone(),
            updated_at: first.at,
            next_seq: 1,
            replies: HashMap::new(),
            reports: HashMap::new(),
            log,
        };
        let mut finished_logged = false;
        for r in records {
            if r.seq != session.next_seq || r.session != session.id {
                return Err(format!("event {} is out of sequence", r.seq));
            }
            session.next_seq += 1;
            match r.body {
                EventBody::Created { .. } => return Err("second created event".into()),
                EventBody::Action {
                    step,
                    action,
                    idempotency_key,
                } => {
                    if step != session.episode.steps().len() {
                        return Err(format!("event {} records step {step} out of order", r.seq));
                    }
                    session
                        .episode
                        .apply(&action)
                        .map_err(|e| format!("event {}: {e}", r.seq))?;
                    session.updated_at = r.at;
                    if let Some(key) = idempotency_key {
                        let body = session.action_body();
                        session.replies.insert(key, (action, body));
                    }
                }
                EventBody::Finished { outcome } => {
                    if session.episode.outcome() != Some(outcome) || finished_logged {
                        return Err(format!("event {} records an outcome the steps do not reach", r.seq));
                    }
                    finished_logged = true;
                }
            }
        }
        if let (Some(outcome), false) = (session.episode.outcome(), finished_logged) {
            let record = EventRecord {
                session: session.id.clone(),
                seq: session.next_seq,
                at: session.updated_at.clone(),
                body: EventBody::Finished { outcome },
            };
            session.log.append(&[record]).map_err(|e| e.to_string())?;
            session.next_seq += 1;
        }
        Ok(session)
    }
}

fn session_active() -> ApiError {
    ApiError::new(StatusCode::CONFLICT, "session-active", "session is still running")
}
