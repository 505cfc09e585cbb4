use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use valence_service::{router, SessionManager};

const WIN: [&str; 8] = [
    "PrepareEquipment",
    "UpdateKnowledge",
    "ContainFire",
    "ContainFire",
    "EvacuateOccupants",
    "EvacuateOccupants",
    "EvacuateOccupants",
    "EvacuateOccupants",
];

struct Harness {
    app: Router,
    dir: tempfile::TempDir,
}

impl Harness {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let app = router(Arc::new(SessionManager::open(dir.path()).unwrap()));
        Harness { app, dir }
    }

    fn restart(&mut self) {
        self.app = router(Arc::new(SessionManager::open(self.dir.path()).unwrap()));
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
        let request = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
            .unwrap();
        let response = self.app.clone().oneshot(request).await.unwrap();
        let status = response.status();
        let bytes = response.into_body().collect().await.unwrap().to_bytes();
        (status, String::from_utf8(bytes.to_vec()).unwrap())
    }

    async fn json(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, text) = self.call(method, uri, body).await;
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    async fn create(&self, body: Value) -> String {
        let (status, view) = self.json("POST", "/api/v1/sessions", Some(body)).await;
        assert_eq!(status, StatusCode::CREATED, "{view}");
        view["id"].as_str().unwrap().to_string()
    }

    async fn act(&self, id: &str, action: &str) -> (StatusCode, Value) {
        self.json(
            "POST",
            &format!("/api/v1/sessions/{id}/actions"),
            Some(json!({ "action": action })),
        )
        .await
    }
}

fn levels(view: &Value) -> Vec<&str> {
    view["variables"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["level"].as_str().unwrap())
        .collect()
}

#[tokio::test]
async fn create_session_starts_at_the_initial_state() {
    let h = Harness::new();
    let (status, view) = h
        .json("POST", "/api/v1/sessions", Some(json!({"scenario": "firefight"})))
        .await;
    assert_eq!(status, StatusCode::CREATED);
    let id = view["id"].as_str().unwrap();
    assert_eq!(id.len(), 22);
    assert!(id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_'));
    assert_eq!(levels(&view), ["Moderate", "4", "NotReady", "Poor", "Perfect"]);
    assert_eq!(view["status"], "active");
    assert_eq!(view["available_actions"].as_array().unwrap().len(), 5);
    assert_eq!(view["variables"].as_array().unwrap().len(), 5);
    assert!(h.dir.path().join(format!("{id}.events.jsonl")).exists());

    let (status, err) = h
        .json("POST", "/api/v1/sessions", Some(json!({"scenario": "flood"})))
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "unknown-scenario");
    assert!(err["message"].is_string() && err["details"].is_object());

    let (status, err) = h
        .json(
            "POST",
            "/api/v1/sessions",
            Some(json!({"scenario": "firefight", "config": {"horizon": 0}})),
        )
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "bad-request");
    let (status, _) = h.call("POST", "/api/v1/sessions", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, err) = h.json("GET", "/api/v1/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "unknown-session");
}

#[tokio::test]
async fn same_seed_same_replay() {
    let h = Harness::new();
    let mut finals = Vec::new();
    for _ in 0..2 {
        let id = h
            .create(json!({"scenario": "firefight-stochastic", "seed": 7, "config": {"reveal": true}}))
            .await;
        for _ in 0..6 {
            let (status, _) = h.act(&id, "ContainFire").await;
            if status != StatusCode::OK {
                break;
            }
        }
        let (_, view) = h.json("GET", &format!("/api/v1/sessions/{id}"), None).await;
        finals.push((view["steps"].clone(), view["cumulative"].clone()));
    }
    assert_eq!(finals[0], finals[1]);
}

#[tokio::test]
async fn actions_step_the_session() {
    let h = Harness::new();
    let id = h.create(json!({"scenario": "firefight"})).await;
    let (status, body) = h.act(&id, "PrepareEquipment").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(levels(&body["session"]), ["Moderate", "4", "Ready", "Poor", "Perfect"]);
    assert_eq!(body["step"]["index"], 0);
    assert_eq!(body["step"]["next_state"]["equipment"], "Ready");

    let (status, err) = h.act(&id, "Ventilate").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "action-unavailable");
    assert_eq!(err["details"]["available"].as_array().unwrap().len(), 5);

    let uri = format!("/api/v1/sessions/{id}/actions");
    let (status, err) = h
        .json("POST", &uri, Some(json!({"action": "ContainFire", "expected_step": 0})))
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "stale-step");
    let (status, _) = h
        .json("POST", &uri, Some(json!({"action": "ContainFire", "expected_step": 1})))
        .await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn finished_sessions_refuse_actions() {
    let h = Harness::new();
    let id = h.create(json!({"scenario": "firefight"})).await;
    h.act(&id, "EvacuateOccupants").await;
    let (_, body) = h.act(&id, "EvacuateOccupants").await;
    assert_eq!(body["session"]["status"], "finished");
    assert_eq!(body["session"]["outcome"], "failure");
    let (status, view) = h.json("GET", &format!("/api/v1/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["available_actions"], json!([]));
    let (status, err) = h.act(&id, "ContainFire").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "session-finished");
}

#[tokio::test]
async fn idempotency_keys_replay_the_stored_result() {
    let mut h = Harness::new();
    let id = h.create(json!({"scenario": "firefight"})).await;
    let uri = format!("/api/v1/sessions/{id}/actions");
    let request = json!({"action": "PrepareEquipment", "idempotency_key": "k1"});
    let (s1, first) = h.call("POST", &uri, Some(request.clone())).await;
    let (s2, second) = h.call("POST", &uri, Some(request.clone())).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(first, second);
    let (_, view) = h.json("GET", &format!("/api/v1/sessions/{id}"), None).await;
    assert_eq!(view["step_count"], 1);

    let (status, err) = h
        .json(
            "POST",
            &uri,
            Some(json!({"action": "ContainFire", "idempotency_key": "k1"})),
        )
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "idempotency-conflict");

    // the key survives a restart
    h.restart();
    let (_, third) = h.call("POST", &uri, Some(request)).await;
    assert_eq!(third, first);
}

#[tokio::test]
async fn blind_sessions_hide_scores_until_finished() {
    let h = Harness::new();
    let id = h.create(json!({"scenario": "firefight"})).await;
    for action in &WIN[..7] {
        let (_, body) = h.act(&id, action).await;
        let text = body.to_string();
        assert!(!text.contains("alignment") && !text.contains("cumulative"), "{text}");
    }
    let (_, view) = h.call("GET", &format!("/api/v1/sessions/{id}"), None).await;
    assert!(!view.contains("alignment"));
    let (status, _) = h.call("GET", &format!("/api/v1/sessions/{id}/report"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = h.call("GET", &format!("/api/v1/sessions/{id}/trajectory"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (_, body) = h.act(&id, WIN[7]).await;
    assert_eq!(body["session"]["outcome"], "success");
    assert!(body["step"]["alignment"].is_object());
    assert!(body["session"]["cumulative"].is_object());

    let revealed = h
        .create(json!({"scenario": "firefight", "config": {"reveal": true}}))
        .await;
    let (_, body) = h.act(&revealed, "PrepareEquipment").await;
    assert_eq!(
        body["step"]["alignment"],
        json!({"Professionalism": 0.5, "Proximity": -0.1})
    );
}

#[tokio::test]
async fn reports_for_finished_sessions() {
    let h = Harness::new();
    let id = h.create(json!({"scenario": "firefight"})).await;
    let uri = format!("/api/v1/sessions/{id}/report");
    let (status, err) = h.json("GET", &uri, None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "session-active");
    for action in WIN {
        h.act(&id, action).await;
    }
    let (status, first) = h.call("GET", &uri, None).await;
    assert_eq!(status, StatusCode::OK, "{first}");
    let (_, second) = h.call("GET", &uri, None).await;
    assert_eq!(first, second);
    let report: Value = serde_json::from_str(&first).unwrap();
    assert_eq!(report["outcome"], "success");
    assert_eq!(report["cumulative"].as_array().unwrap().len(), 2);
    assert!(report["dominance"].is_string());
    let recs = report["recommendations"].as_array().unwrap();
    assert!(!recs.is_empty() && recs.len() <= 3);

    let (status, weighted) = h.json("GET", &format!("{uri}?weights=1,0"), None).await;
    assert_eq!(status, StatusCode::OK);
    let recs = weighted["recommendations"].as_array().unwrap();
    assert_eq!(recs.len(), 1);
    let (_, front) = h
        .json("GET", "/api/v1/scenarios/firefight/front?gamma=1&horizon=50", None)
        .await;
    let best = front["front"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v[0].as_f64().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(recs[0]["vector"][0].as_f64().unwrap(), best);

    let (status, err) = h.json("GET", &format!("{uri}?weights=1,x"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{err}");
    let (status, _) = h.json("GET", &format!("{uri}?weights=1,0,0"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, traj) = h.call("GET", &format!("/api/v1/sessions/{id}/trajectory"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(traj.lines().count(), 1 + WIN.len());
}

#[tokio::test]
async fn scenarios_and_fronts() {
    let h = Harness::new();
    let (status, list) = h.json("GET", "/api/v1/scenarios", None).await;
    assert_eq!(status, StatusCode::OK);
    let names: Vec<&str> = list
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["firefight", "firefight-stochastic"]);
    assert_eq!(list[0]["values"], json!(["Professionalism", "Proximity"]));
    assert_eq!(list[0]["hash"].as_str().unwrap().len(), 64);

    let (status, front) = h.json("GET", "/api/v1/scenarios/firefight/front", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(front["config"]["horizon"], 50);
    assert_eq!(front["approximate"], false);
    assert!(!front["front"].as_array().unwrap().is_empty());
    assert!(front["hypervolume"].as_f64().unwrap() > 0.0);
    assert!(std::fs::read_dir(h.dir.path().join("fronts")).unwrap().count() == 1);

    let (status, front) = h
        .json("GET", "/api/v1/scenarios/firefight-stochastic/front?horizon=10", None)
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(front["config"]["max_vectors"], 16);

    let (status, _) = h
        .json("GET", "/api/v1/scenarios/firefight/front?horizon=abc", None)
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = h.json("GET", "/api/v1/scenarios/nope/front", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, err) = h.json("GET", "/api/v2/whatever", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not-found");
}

#[tokio::test]
async fn restart_recovers_sessions_and_drops_torn_lines() {
    let mut h = Harness::new();
    let id = h.create(json!({"scenario": "firefight", "seed": 3})).await;
    for action in &WIN[..3] {
        h.act(&id, action).await;
    }
    let (_, before) = h.call("GET", &format!("/api/v1/sessions/{id}"), None).await;

    let path = h.dir.path().join(format!("{id}.events.jsonl"));
    let mut log = std::fs::read(&path).unwrap();
    log.extend_from_slice(br#"{"session":"#);
    std::fs::write(&path, &log).unwrap();
    h.restart();
    let (_, after) = h.call("GET", &format!("/api/v1/sessions/{id}"), None).await;
    assert_eq!(before, after);

    // the torn fragment is gone, so appends land on a clean line
    let (status, _) = h.act(&id, WIN[3]).await;
    assert_eq!(status, StatusCode::OK);
    h.restart();
    let (_, view) = h.json("GET", &format!("/api/v1/sessions/{id}"), None).await;
    assert_eq!(view["step_count"], 4);
    let text = std::fs::read_to_string(&path).unwrap();
    let seqs: Vec<u64> = text
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["seq"].as_u64().unwrap())
        .collect();
    assert_eq!(seqs, (0..5).collect::<Vec<_>>());
}

#[test]
fn corrupt_logs_are_skipped_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.events.jsonl"), "not json\n{}\n").unwrap();
    let manager = SessionManager::open(dir.path()).unwrap();
    assert!(manager.session_ids().is_empty());
    assert_eq!(manager.skipped().len(), 1);
}
