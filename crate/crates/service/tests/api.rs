use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use hydrotwin_core::datastore::RunStore;
use hydrotwin_core::decision::GroundTruthOracle;
use hydrotwin_service::api::router;
use hydrotwin_service::config::ServiceConfig;
use hydrotwin_service::history::History;
use hydrotwin_service::pipeline::sample_history;
use hydrotwin_service::{Service, ServiceModel};
use serde_json::{json, Value};
use tower::ServiceExt;

fn small_config() -> ServiceConfig {
    let mut c = ServiceConfig::default();
    c.sample.days = 2;
    c
}

fn oracle(c: &ServiceConfig) -> ServiceModel {
    ServiceModel::Oracle(GroundTruthOracle {
        params: c.truth.noiseless(),
    })
}

fn bare(config: ServiceConfig) -> Service {
    Service::new(config, History::default(), None, RunStore::in_memory())
}

fn with_history() -> Service {
    let c = small_config();
    let h = sample_history(&c).unwrap();
    let m = oracle(&c);
    Service::new(c, h, Some(m), RunStore::in_memory())
}

async fn call(svc: &Service, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(svc.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn get(svc: &Service, uri: &str) -> (StatusCode, Value) {
    call(svc, Method::GET, uri, None).await
}

async fn post(svc: &Service, uri: &str, body: &str) -> (StatusCode, Value) {
    call(svc, Method::POST, uri, Some(body)).await
}

fn assert_error(v: &Value, code: &str) {
    assert_eq!(v["code"], code, "{v}");
    assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()), "{v}");
    assert_eq!(v.as_object().unwrap().len(), 2, "{v}");
}

#[tokio::test]
async fn fresh_state_has_version_zero() {
    let svc = bare(ServiceConfig::default());
    let (s, v) = get(&svc, "/api/v1/state").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["state_version"], 0);
    assert!(v["latest_recommendation"].is_null());
    assert!(v["active_schedule"].is_null());
    assert_eq!(v["model_trained"], false);
    assert_eq!(v["plant"]["tank"]["level_pct"], 60.0);
}

#[tokio::test]
async fn tick_advances_version_per_step() {
    let svc = bare(ServiceConfig::default());
    let (s, v) = post(&svc, "/api/v1/sim/tick", r#"{"steps": 3}"#).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["state_version"], 3);
    assert_eq!(v["steps"].as_array().unwrap().len(), 3);
    assert_eq!(v["flags"]["no_active_schedule"], true);
    let versions: Vec<_> = v["steps"].as_array().unwrap().iter().map(|s| s["state_version"].as_u64().unwrap()).collect();
    assert_eq!(versions, [1, 2, 3]);
    let (_, st) = get(&svc, "/api/v1/state").await;
    assert_eq!(st["state_version"], 3);
    assert_eq!(st["plant"], v["plant"]);

    let (s, v) = post(&svc, "/api/v1/sim/tick", r#"{"steps": 0}"#).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error(&v, "invalid_request");
    let (_, st) = get(&svc, "/api/v1/state").await;
    assert_eq!(st["state_version"], 3);
}

#[tokio::test]
async fn tick_with_no_inflow_keeps_level() {
    let mut c = ServiceConfig::default();
    let inflow = &mut c.scenario.inflow;
    inflow.base_pct = 0.0;
    inflow.diurnal_amp_pct = 0.0;
    inflow.rain_gain_pct_per_mm = 0.0;
    inflow.noise_sigma_pct = 0.0;
    let svc = bare(c);
    let (_, v) = post(&svc, "/api/v1/sim/tick", r#"{"steps": 4}"#).await;
    for step in v["steps"].as_array().unwrap() {
        assert_eq!(step["inflow_pct"], 0.0);
        assert_eq!(step["level_pct"], 60.0);
    }
    assert_eq!(v["flags"]["overflow"], false);
    assert_eq!(v["flags"]["underflow"], false);
}

#[tokio::test]
async fn overflow_is_flagged_and_streamed() {
    let mut c = ServiceConfig::default();
    c.initial_level_pct = 99.0;
    let svc = bare(c);
    let mut rx = svc.subscribe();
    let (s, v) = post(&svc, "/api/v1/sim/tick", r#"{"steps": 2}"#).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["flags"]["overflow"], true);
    assert_eq!(v["steps"][0]["overflow"], true);
    assert_eq!(v["plant"]["tank"]["level_pct"], 100.0);
    let mut kinds = Vec::new();
    while let Ok(e) = rx.try_recv() {
        kinds.push((serde_json::to_value(e.kind).unwrap(), e.state_version));
    }
    assert!(kinds.contains(&(json!("violation"), 1)), "{kinds:?}");
    assert!(kinds.contains(&(json!("state"), 1)));
}

#[tokio::test]
async fn ingest_counts_rows_and_rejects() {
    let svc = bare(ServiceConfig::default());
    let csv = "timestamp,tag,value\n\
               2024-03-01T00:00:00Z,tank_level_pct,61\n\
               2024-03-01T00:00:00Z,inflow_m3,30\n\
               2024-03-01T00:00:00Z,reactor1_status,1\n";
    let (s, v) = post(&svc, "/api/v1/ingest/historian", csv).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["accepted_rows"], 3);
    assert!(v["row_errors"].as_array().unwrap().is_empty());
    assert_eq!(v["state_version"], 1);

    let csv = "timestamp,tag,value\n\
               2024-03-01T00:15:00Z,tank_level_pct,62\n\
               2024-03-01T00:15:00Z,bogus_tag,1\n\
               2024-03-01T00:15:00Z,inflow_m3,31\n";
    let (_, v) = post(&svc, "/api/v1/ingest/historian", csv).await;
    assert_eq!(v["accepted_rows"], 2);
    assert_eq!(v["row_errors"].as_array().unwrap().len(), 1);
    assert_eq!(v["row_errors"][0]["line"], 3);
    assert_eq!(svc.history().await.historian.len(), 5);

    for body in ["", "when,what\n1,2\n"] {
        let (s, v) = post(&svc, "/api/v1/ingest/historian", body).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body:?}");
        assert_error(&v, "parse_error");
    }
}

#[tokio::test]
async fn plan_requires_model_and_history() {
    let svc = bare(ServiceConfig::default());
    let (s, v) = post(&svc, "/api/v1/plan", r#"{"horizon_steps": 8}"#).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_error(&v, "model_not_trained");

    let c = ServiceConfig::default();
    let m = oracle(&c);
    let svc = Service::new(c, History::default(), Some(m), RunStore::in_memory());
    let (s, v) = post(&svc, "/api/v1/plan", r#"{"horizon_steps": 8}"#).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert!(v["code"].is_string());
}

#[tokio::test]
async fn plan_validates_body() {
    let svc = with_history();
    for body in [r#"{"horizon_steps": 0}"#, r#"{"horizon": 8}"#, "not json", r#"{"horizon_steps": 8, "extra": 1}"#] {
        let (s, v) = post(&svc, "/api/v1/plan", body).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");
        assert_error(&v, "invalid_request");
    }
    assert_eq!(svc.snapshot().state_version, 0);
}

#[tokio::test]
async fn identical_plans_differ_only_in_run() {
    let svc = with_history();
    let body = r#"{"horizon_steps": 12}"#;
    let (s, a) = post(&svc, "/api/v1/plan", body).await;
    assert_eq!(s, StatusCode::OK, "{a}");
    let (_, b) = post(&svc, "/api/v1/plan", body).await;
    assert_ne!(a["run_id"], b["run_id"]);
    assert_eq!(a["recommendation"], b["recommendation"]);
    let rec = &a["recommendation"];
    assert_eq!(rec["steps"].as_array().unwrap().len(), 12);
    assert_eq!(rec["schedule"]["x"].as_array().unwrap().len(), 3);

    let (_, st) = get(&svc, "/api/v1/state").await;
    assert_eq!(st["state_version"], 2);
    assert_eq!(st["latest_recommendation"], *rec);

    // an overridden omega changes the input hash
    let (_, c) = post(&svc, "/api/v1/plan", r#"{"horizon_steps": 12, "omega": 5.0}"#).await;
    assert_ne!(c["recommendation"]["input_hash"], rec["input_hash"]);
}

#[tokio::test]
async fn whatif_uses_the_model() {
    let svc = with_history();
    let (s, v) = post(
        &svc,
        "/api/v1/whatif",
        r#"{"op_point": {"temp_setpoint_c": 164, "dry_solids_frac": 0.2, "cycle_minutes": 40}}"#,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert!((v["predicted_energy"].as_f64().unwrap() - 39.44).abs() < 1e-9);
    assert_eq!(v["feasible"], true);

    let (s, v) = post(
        &svc,
        "/api/v1/whatif",
        r#"{"op_point": {"temp_setpoint_c": 250, "dry_solids_frac": 0.2, "cycle_minutes": 40}}"#,
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error(&v, "invalid_request");
    assert_eq!(svc.snapshot().state_version, 0);

    let untrained = bare(ServiceConfig::default());
    let (s, v) = post(
        &untrained,
        "/api/v1/whatif",
        r#"{"op_point": {"temp_setpoint_c": 164, "dry_solids_frac": 0.2, "cycle_minutes": 40}}"#,
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_error(&v, "model_not_trained");
}

#[tokio::test]
async fn operator_actions_drive_ticks() {
    let svc = with_history();
    let (_, run) = post(&svc, "/api/v1/plan", r#"{"horizon_steps": 8}"#).await;
    let id = run["run_id"].as_u64().unwrap();
    let x = &run["recommendation"]["schedule"]["x"];
    let flipped = !x[0][0].as_bool().unwrap();

    let body = json!({"run_id": id, "kind": "override", "schedule_edits": [{"reactor": 0, "step": 0, "on": flipped}]});
    let (s, v) = post(&svc, "/api/v1/operator/action", &body.to_string()).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["operator_action"]["kind"], "override");

    let (_, st) = get(&svc, "/api/v1/state").await;
    let active = &st["active_schedule"]["schedule"]["x"];
    let mut differing = 0;
    for r in 0..3 {
        for t in 0..8 {
            differing += usize::from(active[r][t] != x[r][t]);
        }
    }
    assert_eq!(differing, 1);
    assert_eq!(active[0][0], flipped);

    let (_, tick) = post(&svc, "/api/v1/sim/tick", r#"{"steps": 1}"#).await;
    assert_eq!(tick["flags"]["no_active_schedule"], false);
    assert_eq!(tick["steps"][0]["run_id"], id);
    assert_eq!(tick["steps"][0]["decisions"][0], flipped);

    let (s, v) = post(&svc, "/api/v1/operator/action", &json!({"run_id": id, "kind": "accept"}).to_string()).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_error(&v, "conflict");
    let (s, v) = post(&svc, "/api/v1/operator/action", r#"{"run_id": 999, "kind": "accept"}"#).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "not_found");
}

#[tokio::test]
async fn runs_are_paged() {
    let svc = with_history();
    for _ in 0..3 {
        post(&svc, "/api/v1/plan", r#"{"horizon_steps": 4}"#).await;
    }
    let (_, all) = get(&svc, "/api/v1/runs").await;
    assert_eq!(all["total"], 3);
    assert_eq!(all["limit"], 50);
    assert_eq!(all["runs"].as_array().unwrap().len(), 3);
    let (_, one) = get(&svc, "/api/v1/runs?limit=1&offset=1").await;
    assert_eq!(one["runs"].as_array().unwrap().len(), 1);
    assert_eq!(one["runs"][0], all["runs"][1]);

    let id = all["runs"][0]["run_id"].as_u64().unwrap();
    let (s, v) = get(&svc, &format!("/api/v1/runs/{id}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, all["runs"][0]);
    for uri in ["/api/v1/runs/424242", "/api/v1/runs/abc", "/api/v1/nothing"] {
        let (s, v) = get(&svc, uri).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert_error(&v, "not_found");
    }
    let (s, v) = get(&svc, "/api/v1/runs?limit=-1").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error(&v, "invalid_request");
    let (s, v) = call(&svc, Method::DELETE, "/api/v1/state", None).await;
    assert_eq!(s, StatusCode::METHOD_NOT_ALLOWED);
    assert_error(&v, "method_not_allowed");
}

async fn next_frame(body: &mut Body) -> String {
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(10), body.frame())
            .await
            .expect("stream stalled")
            .expect("stream ended")
            .unwrap();
        if let Ok(data) = frame.into_data() {
            let text = String::from_utf8(data.to_vec()).unwrap();
            // skip keep-alive comments
            if !text.starts_with(':') {
                return text;
            }
        }
    }
}

#[tokio::test]
async fn stream_starts_with_snapshot() {
    let svc = bare(ServiceConfig::default());
    post(&svc, "/api/v1/sim/tick", r#"{"steps": 1}"#).await;
    let req = Request::builder().uri("/api/v1/stream").body(Body::empty()).unwrap();
    let resp = router(svc.clone()).oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    let mut body = resp.into_body();

    let first = next_frame(&mut body).await;
    assert!(first.starts_with("event: snapshot\n"), "{first}");
    assert!(first.contains("\"state_version\":1"));

    post(&svc, "/api/v1/sim/tick", r#"{"steps": 1}"#).await;
    let second = next_frame(&mut body).await;
    assert!(second.starts_with("event: state\n"), "{second}");
    let data: Value = serde_json::from_str(second.lines().find_map(|l| l.strip_prefix("data: ")).unwrap()).unwrap();
    assert_eq!(data["state_version"], 2);
    assert_eq!(data["type"], "state");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_mutations_serialize() {
    let svc = with_history();
    let mut tasks = Vec::new();
    for i in 0..16 {
        let svc = svc.clone();
        tasks.push(tokio::spawn(async move {
            if i % 4 == 0 {
                let (s, v) = post(&svc, "/api/v1/plan", r#"{"horizon_steps": 6}"#).await;
                assert_eq!(s, StatusCode::OK, "{v}");
                Vec::new()
            } else {
                let (_, v) = post(&svc, "/api/v1/sim/tick", r#"{"steps": 2}"#).await;
                v["steps"].as_array().unwrap().iter().map(|s| s["state_version"].as_u64().unwrap()).collect()
            }
        }));
    }
    let mut versions = Vec::new();
    for t in tasks {
        let v = t.await.unwrap();
        // a tick's own steps are consecutive
        assert!(v.windows(2).all(|w| w[1] == w[0] + 1), "{v:?}");
        versions.extend(v);
    }
    versions.sort_unstable();
    versions.dedup();
    assert_eq!(versions.len(), 24);
    assert_eq!(svc.snapshot().state_version, 28);
    assert_eq!(svc.runs(100, 0).total, 4);
}
