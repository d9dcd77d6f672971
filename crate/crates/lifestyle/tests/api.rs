use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use lifestyle::allocation::Scenario;
use lifestyle::cache::{solve_or_load, SurfaceCache, SurfaceInputs};
use lifestyle::config::Config;
use lifestyle::service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(cache_dir: &Path) -> axum::Router {
    router(Arc::new(AppState { config: Config::default(), cache: SurfaceCache::new(cache_dir) }))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn post(app: &axum::Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let (status, bytes) = call(app, "POST", uri, Some(&body.to_string())).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn weights(v: &Value) -> Vec<f64> {
    v["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Every number in the body carries at most 12 significant digits.
fn check_digits(v: &Value) {
    match v {
        Value::Number(n) => {
            let x = n.as_f64().unwrap();
            if x != 0.0 {
                let s = format!("{:e}", x.abs());
                let mantissa = s.split('e').next().unwrap().replace('.', "");
                assert!(mantissa.len() <= 12, "{x} has more than 12 significant digits");
            }
        }
        Value::Array(xs) => xs.iter().for_each(check_digits),
        Value::Object(m) => m.values().for_each(check_digits),
        _ => {}
    }
}

fn store_desk_surface(dir: &Path, gamma: f64) {
    let cfg = Config::default();
    let scn = Scenario::new(&cfg.market, &cfg.schedule).unwrap();
    let inputs = SurfaceInputs {
        params: scn.params.clone(),
        schedule: scn.schedule.clone(),
        gamma,
        grid: cfg.solver.grid(scn.schedule.horizon()).unwrap(),
        options: cfg.solver.options().unwrap(),
    };
    solve_or_load(&SurfaceCache::new(dir), &inputs).unwrap();
}

#[tokio::test]
async fn health() {
    let dir = tempfile::tempdir().unwrap();
    let (status, bytes) = call(&app(dir.path()), "GET", "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["status"], "ok");
}

#[tokio::test]
async fn allocate_heuristics() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, v) = post(&app, "/api/allocate", json!({"gamma": 8, "strategy": "pi1", "alpha": 1})).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert!(close(&weights(&v), &[0.546, 0.186], 1e-3), "{v}");
    assert_eq!(v["assets"], json!(["bond", "stock"]));
    check_digits(&v);

    // pi3 is the default strategy
    let (_, v) = post(&app, "/api/allocate", json!({"gamma": 8, "t": 0, "wealth": 0.2})).await;
    assert_eq!(v["strategy"], "pi3");
    assert!(close(&weights(&v), &[0.180, 0.820], 1e-3), "{v}");
    assert_eq!(v["binding"], json!(["budget_full"]));

    let (_, v) = post(&app, "/api/allocate", json!({"gamma": 2, "strategy": "pi1"})).await;
    assert!(close(&weights(&v), &[0.349, 0.651], 1e-3), "{v}");
    let (_, v) = post(&app, "/api/allocate", json!({"gamma": 2, "strategy": "pi0"})).await;
    assert!(close(&weights(&v), &[0.747, 0.253], 1e-3), "{v}");
    let (_, v) = post(&app, "/api/allocate", json!({"gamma": 8, "alpha": 0})).await;
    assert_eq!(weights(&v), vec![0.0, 1.0]);
    let (_, v) = post(&app, "/api/allocate", json!({"gamma": 8, "preset": "paper-baseline", "alpha": 1})).await;
    assert!(close(&weights(&v), &[0.546, 0.186], 1e-3), "{v}");
}

#[tokio::test]
async fn allocate_with_explicit_market() {
    let dir = tempfile::tempdir().unwrap();
    let body = json!({
        "gamma": 8, "strategy": "pi1", "alpha": 1,
        "market": {
            "rate_riskfree": 0.01, "drifts": [0.02, 0.10],
            "volatilities": [0.05, 0.25], "correlation": [[1.0, -0.05], [-0.05, 1.0]]
        }
    });
    let (status, v) = post(&app(dir.path()), "/api/allocate", body).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert!(close(&weights(&v), &[0.546, 0.186], 1e-3), "{v}");
}

#[tokio::test]
async fn glidepath_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, v) = post(&app, "/api/glidepath", json!({"gamma": 8})).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let th = &v["thresholds"];
    assert!((th["budget"].as_f64().unwrap() - 0.731).abs() < 2e-3, "{th}");
    assert!((th["full_stock"].as_f64().unwrap() - 0.157).abs() < 2e-3, "{th}");
    assert_eq!(v["points"].as_array().unwrap().len(), 101);
    check_digits(&v);

    let (status, v) = post(&app, "/api/glidepath", json!({"gamma": 2, "alphas": [0.2, 0.634, 1.0]})).await;
    assert_eq!(status, StatusCode::OK);
    assert!((v["thresholds"]["full_stock"].as_f64().unwrap() - 0.634).abs() < 5e-3, "{v}");
    assert_eq!(v["points"].as_array().unwrap().len(), 3);

    let states = json!({"gamma": 8, "states": [{"t": 0, "wealth": 0.2}, {"t": 10, "wealth": 1.0}]});
    let (status, v) = post(&app, "/api/glidepath", states).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert!(close(&weights(&v["points"][0]), &[0.180, 0.820], 1e-3));
}

#[tokio::test]
async fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, bytes) = call(&app, "POST", "/api/allocate", Some("{not json")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["error"]["code"], "invalid_json");
    assert_eq!(v["error"]["status"], 400);

    let bad_requests = [
        json!({"gamma": -1, "alpha": 0.5}),
        json!({"gamma": 8, "alpha": 1.5}),
        json!({"gamma": 8, "strategy": "pi9", "alpha": 0.5}),
        json!({"gamma": 8, "alpha": 0.5, "t": 0, "wealth": 1}),
        json!({"gamma": 8, "strategy": "pi2"}),
        json!({"gamma": 8, "alpha": 0.5, "preset": "paper-baseline", "market": {}}),
        json!({"gamma": 8, "alpha": 0.5, "unknown_field": 1}),
        json!({"gamma": 8, "market": {"drifts": [0.02, 0.1]}}),
    ];
    for body in bad_requests {
        let (status, v) = post(&app, "/api/allocate", body.clone()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body} -> {v}");
        assert!(v["error"]["message"].as_str().is_some_and(|m| !m.is_empty()));
        assert!(v["error"].get("correlation_id").is_none());
    }
    let (status, _) = post(&app, "/api/glidepath", json!({"gamma": 8, "alphas": [0.5, 0.2]})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(&app, "/api/compare", json!({"gamma": 8, "method": "mc", "n_paths": 10_000_000})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, v) = post(&app, "/api/allocate", json!({"gamma": 8, "alpha": 0.5, "preset": "mars"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "unknown_preset");
    let (status, _) = post(&app, "/api/compare", json!({"gamma": 8, "fidelity": "ultra"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, bytes) = call(&app, "GET", "/api/nothing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(serde_json::from_slice::<Value>(&bytes).is_ok());
}

#[tokio::test]
async fn optimal_needs_a_cached_surface() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, v) = post(&app, "/api/allocate", json!({"gamma": 8, "strategy": "optimal", "t": 0, "wealth": 20})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "surface_missing");
    assert!(v["error"]["message"].as_str().unwrap().contains("solve-hjb --gamma 8"));
    let (status, _) = post(&app, "/api/compare", json!({"gamma": 8, "strategies": ["pi3", "optimal"]})).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn compare_heuristics_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let body = json!({"gamma": 8}).to_string();
    let (status, first) = call(&app, "POST", "/api/compare", Some(&body)).await;
    assert_eq!(status, StatusCode::OK);
    let (_, second) = call(&app, "POST", "/api/compare", Some(&body)).await;
    assert_eq!(first, second);
    let v: Value = serde_json::from_slice(&first).unwrap();
    check_digits(&v);
    let rows = v["rows"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["strategy"].as_str().unwrap()).collect();
    assert_eq!(names, ["pi0", "pi1", "pi2", "pi3"]);
    let ce: Vec<f64> = rows.iter().map(|r| r["ce"].as_f64().unwrap()).collect();
    assert!(close(&ce, &[1.6872, 1.6872, 1.7510, 1.8161], 0.03), "{ce:?}");
    assert!(rows.iter().all(|r| r["method"] == "pde" && r["stderr"].is_null()));

    let mc = json!({"gamma": 5, "strategies": ["pi3"], "method": "mc", "n_paths": 2000, "dt_sim": 0.5, "seed": 3})
        .to_string();
    let (status, a) = call(&app, "POST", "/api/compare", Some(&mc)).await;
    assert_eq!(status, StatusCode::OK);
    let (_, b) = call(&app, "POST", "/api/compare", Some(&mc)).await;
    assert_eq!(a, b);
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert!(v["rows"][0]["stderr"].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn optimal_endpoints_read_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    store_desk_surface(dir.path(), 8.0);
    let app = app(dir.path());
    let body = json!({"gamma": 8, "strategy": "optimal", "t": 0, "wealth": 20});
    let (status, v) = post(&app, "/api/allocate", body.clone()).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert!(close(&weights(&v), &[0.569, 0.193], 0.03), "{v}");
    let rbar = v["indirect_risk_aversion"].as_f64().unwrap();
    assert!(rbar > 0.0 && rbar <= 8.0);
    let (_, again) = post(&app, "/api/allocate", body).await;
    assert_eq!(v, again);

    let states = json!({"gamma": 8, "strategy": "optimal", "states": [{"t": 0, "wealth": 20}, {"t": 39.975, "wealth": 0.2}]});
    let (status, v) = post(&app, "/api/glidepath", states).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert!(close(&weights(&v["points"][1]), &[0.548, 0.186], 0.03), "{v}");

    let (status, v) = post(&app, "/api/compare", json!({"gamma": 8, "strategies": ["pi3", "optimal"]})).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let ce_opt = v["rows"][1]["ce"].as_f64().unwrap();
    assert!((ce_opt - 1.8164).abs() < 0.03, "{v}");
    assert!(ce_opt >= v["rows"][0]["ce"].as_f64().unwrap() - 1e-3);
}

#[tokio::test]
async fn unreadable_surface_is_an_internal_error() {
    let dir = tempfile::tempdir().unwrap();
    store_desk_surface(dir.path(), 8.0);
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        std::fs::write(entry.unwrap().path(), b"garbage").unwrap();
    }
    let app = app(dir.path());
    let (status, v) = post(&app, "/api/allocate", json!({"gamma": 8, "strategy": "optimal", "t": 0, "wealth": 1})).await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    let id = v["error"]["correlation_id"].as_str().unwrap();
    assert_eq!(id.len(), 36);
    assert!(!v["error"]["message"].as_str().unwrap().contains("garbage"));
}
