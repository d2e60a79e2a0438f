use std::sync::Arc;
use std::time::{Duration, Instant};

use arena_core::campaign::{run_campaign, CampaignConfig, MethodSpec, Trajectory};
use arena_core::BenchmarkDataset;
use arena_service::auth::TokenTable;
use arena_service::{router, ServiceConfig, ServiceState};
use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const TINY: &str = include_str!("../../core/fixtures/tiny.json");
const AMINATION: &str = include_str!("../../core/fixtures/amination_replicates.json");

async fn send(app: &Router, method: Method, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let body = body.map_or(Body::empty(), |v| Body::from(v.to_string()));
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn json_call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, text) = send(app, method, uri, body, None).await;
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

async fn app_with(datasets: &[&str]) -> (Arc<ServiceState>, Router) {
    let state = ServiceState::in_memory();
    let app = router(state.clone());
    for d in datasets {
        let (status, _) = send(&app, Method::POST, "/datasets", Some(serde_json::from_str(d).unwrap()), None).await;
        assert_eq!(status, StatusCode::CREATED);
    }
    (state, app)
}

fn human(dataset: &str, budget: usize, author: &str) -> Value {
    json!({"dataset": dataset, "method": {"modality": "human"}, "budget": budget, "batch": 1, "author": author})
}

fn suggestion(iteration: usize, catalyst: &str, solvent: &str) -> Value {
    json!({
        "iteration": iteration,
        "assignment": {"catalyst": catalyst, "solvent": solvent},
        "reasoning": {"analysis": "a", "hypothesis": "h", "rationale": "r", "recommendation": "x"}
    })
}

async fn create(app: &Router, body: Value) -> String {
    let (status, v) = json_call(app, Method::POST, "/campaigns", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn wait_for_end(app: &Router, id: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(30);
    loop {
        let (_, v) = json_call(app, Method::GET, &format!("/campaigns/{id}"), None).await;
        if v["state"] != "running" {
            return v;
        }
        assert!(Instant::now() < deadline, "campaign {id} did not finish");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

#[tokio::test]
async fn human_campaign_round_trip() {
    let (_, app) = app_with(&[TINY]).await;
    let id = create(&app, human("tiny", 3, "ada")).await;

    let (_, fresh) = json_call(&app, Method::GET, &format!("/campaigns/{id}"), None).await;
    assert_eq!(fresh["state"], "awaiting_suggestion");
    assert_eq!(fresh["remaining"], 3);
    assert_eq!(fresh["trajectory"]["records"].as_array().unwrap().len(), 0);

    let uri = format!("/campaigns/{id}/suggestions");
    let (status, obs) = json_call(&app, Method::POST, &uri, Some(suggestion(1, "Ni", "THF"))).await;
    assert_eq!(status, StatusCode::OK, "{obs}");
    assert_eq!(obs["value"], 88.0);
    assert_eq!(obs["measurements"], json!([[88.0]]));
    assert_eq!(obs["remaining"], 2);

    let (status, err) = json_call(&app, Method::POST, &uri, Some(suggestion(1, "Pd", "DMF"))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["expected_iteration"], 2);

    let (status, err) = json_call(&app, Method::POST, &uri, Some(suggestion(2, "Pt", "DMF"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["valid_options"]["catalyst"], json!(["Pd", "Ni"]));

    let arr = json!({"iteration": 2, "assignment": ["Pd", "DMF"]});
    assert_eq!(json_call(&app, Method::POST, &uri, Some(arr)).await.0, StatusCode::OK);

    let (status, err) = json_call(&app, Method::POST, &format!("/campaigns/{id}/publish"), None).await;
    assert_eq!(status, StatusCode::CONFLICT, "{err}");

    let (_, last) = json_call(&app, Method::POST, &uri, Some(suggestion(3, "Pd", "MeCN"))).await;
    assert_eq!(last["state"], "complete");
    assert_eq!(last["best_so_far"], json!({"index": 1, "value": 88.0}));

    let (status, err) = json_call(&app, Method::POST, &uri, Some(suggestion(4, "Ni", "DMF"))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(err["error"].as_str().unwrap().contains("complete"));

    let (_, view) = json_call(&app, Method::GET, &format!("/campaigns/{id}"), None).await;
    let records = view["trajectory"]["records"].as_array().unwrap();
    assert_eq!(records.len(), 3);
    assert_eq!(records[0]["reasoning"]["hypothesis"], "h");
    assert_eq!(records[0]["author"], "ada");

    let (status, _) = json_call(&app, Method::POST, &format!("/campaigns/{id}/publish"), None).await;
    assert_eq!(status, StatusCode::OK);
    json_call(&app, Method::POST, &format!("/campaigns/{id}/publish"), None).await;
    let (_, board) = json_call(&app, Method::GET, "/leaderboard?dataset=tiny", None).await;
    let board = board.as_array().unwrap();
    assert_eq!(board.len(), 1);
    assert_eq!(board[0]["method"], "human-ada");
    assert_eq!(board[0]["modality"], "human");
    assert_eq!(board[0]["runs"], 1);
    assert_eq!(board[0]["median_best"], 88.0);
}

#[tokio::test]
async fn off_table_suggestion_consumes_budget() {
    let (_, app) = app_with(&[AMINATION]).await;
    let id = create(&app, human("amination", 2, "bob")).await;
    let body = json!({"iteration": 1, "assignment": {"base": "K2CO3", "solvent": "MeOH", "additive": "TEMPO"}});
    let (status, obs) = json_call(&app, Method::POST, &format!("/campaigns/{id}/suggestions"), Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{obs}");
    assert_eq!(obs["missing"], true);
    assert_eq!(obs["value"], Value::Null);
    assert_eq!(obs["validity"], "off_table");
    assert_eq!(obs["remaining"], 1);
}

#[tokio::test]
async fn concurrent_double_submit_accepts_one() {
    let (state, app) = app_with(&[TINY]).await;
    let id = create(&app, human("tiny", 6, "ada")).await;
    let uri = format!("/campaigns/{id}/suggestions");
    for iteration in 1..=6 {
        let calls = (0..8).map(|k| {
            let app = app.clone();
            let uri = uri.clone();
            let solvent = ["DMF", "THF", "MeCN"][k % 3];
            tokio::spawn(async move { json_call(&app, Method::POST, &uri, Some(suggestion(iteration, "Pd", solvent))).await.0 })
        });
        let mut statuses = Vec::new();
        for c in calls.collect::<Vec<_>>() {
            statuses.push(c.await.unwrap());
        }
        assert_eq!(statuses.iter().filter(|s| **s == StatusCode::OK).count(), 1, "{statuses:?}");
        assert!(statuses.iter().all(|s| *s == StatusCode::OK || *s == StatusCode::CONFLICT));
    }
    let t = state.trajectory(&id).unwrap();
    let indices: Vec<usize> = t.records.iter().map(|r| r.index).collect();
    assert_eq!(indices, vec![1, 2, 3, 4, 5, 6]);
}

#[tokio::test]
async fn creation_errors() {
    let (_, app) = app_with(&[TINY]).await;
    let (status, _) = json_call(&app, Method::POST, "/campaigns", Some(human("nope", 3, "a"))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let mut zero = human("tiny", 3, "a");
    zero["batch"] = json!(0);
    let (status, err) = json_call(&app, Method::POST, "/campaigns", Some(zero)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{err}");

    let (status, err) = json_call(&app, Method::POST, "/campaigns", Some(json!({"dataset": "tiny"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(err["error"].as_str().unwrap().contains("method"), "{err}");

    assert_eq!(json_call(&app, Method::GET, "/campaigns/c999999", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(json_call(&app, Method::GET, "/trajectories/c999999", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn machine_campaign_matches_cli_schema() {
    let (_, app) = app_with(&[TINY]).await;
    let body = json!({"dataset": "tiny", "method": {"modality": "random"}, "budget": 6, "base_seed": 11, "run_index": 2});
    let id = create(&app, body).await;
    let view = wait_for_end(&app, &id).await;
    assert_eq!(view["state"], "complete");
    assert_eq!(view["trajectory"]["records"].as_array().unwrap().len(), 6);

    let (status, text) = send(&app, Method::GET, &format!("/trajectories/{id}"), None, None).await;
    assert_eq!(status, StatusCode::OK);
    let served = Trajectory::from_json_str(&text).unwrap();

    let mut config = CampaignConfig::new("tiny", MethodSpec::Random);
    config.budget = 6;
    config.base_seed = 11;
    let ds = BenchmarkDataset::from_json_str(TINY).unwrap();
    let local = run_campaign(&config, &ds, 2).unwrap();
    assert_eq!(
        served.without_timestamps().to_json_string(),
        local.without_timestamps().to_json_string()
    );
    assert_eq!(text, served.to_json_string());
}

#[tokio::test]
async fn aborted_machine_campaign_is_visible() {
    let (_, app) = app_with(&[TINY]).await;
    let body = json!({"dataset": "tiny", "method": {"modality": "random"}, "budget": 7});
    let id = create(&app, body).await;
    let view = wait_for_end(&app, &id).await;
    assert_eq!(view["state"], "aborted");
    assert_eq!(view["trajectory"]["status"], "aborted");
    assert!(view["trajectory"]["abort_reason"].is_string());
}

#[tokio::test]
async fn tokens_gate_mutations() {
    let tokens = TokenTable::parse("t-ada ada\nt-bob bob\n").unwrap();
    let state = ServiceState::open(ServiceConfig {
        tokens: Some(tokens),
        ..Default::default()
    })
    .unwrap();
    let app = router(state);
    let ds: Value = serde_json::from_str(TINY).unwrap();
    assert_eq!(send(&app, Method::POST, "/datasets", Some(ds.clone()), None).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(send(&app, Method::POST, "/datasets", Some(ds), Some("t-ada")).await.0, StatusCode::CREATED);

    let (status, text) = send(&app, Method::POST, "/campaigns", Some(human("tiny", 2, "mallory")), Some("t-ada")).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = serde_json::from_str::<Value>(&text).unwrap()["id"].as_str().unwrap().to_string();
    let uri = format!("/campaigns/{id}/suggestions");
    assert_eq!(send(&app, Method::POST, &uri, Some(suggestion(1, "Pd", "DMF")), Some("t-bob")).await.0, StatusCode::FORBIDDEN);
    let (status, text) = send(&app, Method::POST, &uri, Some(suggestion(1, "Pd", "DMF")), Some("t-ada")).await;
    assert_eq!(status, StatusCode::OK, "{text}");
    let (_, text) = send(&app, Method::GET, &format!("/campaigns/{id}"), None, None).await;
    assert_eq!(serde_json::from_str::<Value>(&text).unwrap()["author"], "ada");
}

#[tokio::test]
async fn dataset_registry() {
    let (_, app) = app_with(&[TINY]).await;
    // identical content is accepted again
    assert_eq!(send(&app, Method::POST, "/datasets", Some(serde_json::from_str(TINY).unwrap()), None).await.0, StatusCode::CREATED);
    let mut changed: Value = serde_json::from_str(TINY).unwrap();
    changed["provenance"] = json!("other");
    assert_eq!(send(&app, Method::POST, "/datasets", Some(changed), None).await.0, StatusCode::CONFLICT);

    let (_, list) = json_call(&app, Method::GET, "/datasets", None).await;
    assert_eq!(list[0]["id"], "tiny");
    assert_eq!(list[0]["space_size"], 6);
    let (status, full) = json_call(&app, Method::GET, "/datasets/tiny", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(BenchmarkDataset::from_json_str(&full.to_string()).unwrap(), BenchmarkDataset::from_json_str(TINY).unwrap());
}
