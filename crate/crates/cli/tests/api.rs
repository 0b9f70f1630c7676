mod common;

use std::time::{Duration, Instant};

use common::*;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

fn client() -> Client {
    Client::builder().timeout(Duration::from_secs(30)).build().unwrap()
}

#[test]
fn triage_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let feed = fixture(dir.path());
    ok(run_cmd(&state(dir.path()), &feed));
    let server = serve(&state(dir.path()), &feed, &["--mode", "hook", "--token", "t0k"]);
    let http = client();
    let get = |path: &str| http.get(format!("{}{path}", server.base)).bearer_auth("t0k").send().unwrap();
    let post = |path: &str, body: Value| http.post(format!("{}{path}", server.base)).bearer_auth("t0k").json(&body).send().unwrap();

    let anon = http.get(format!("{}/patches", server.base)).send().unwrap();
    assert_eq!(anon.status(), StatusCode::UNAUTHORIZED);

    let pending: Vec<Value> = get("/patches?status=pending").json().unwrap();
    assert!(pending.len() >= 2);
    let keys: Vec<(usize, String)> = pending
        .iter()
        .map(|v| {
            let flags = v["patch"]["overfitting_flags"].as_array().unwrap();
            let n = flags.iter().filter(|f| *f != "none").count();
            (n, v["patch"]["created_at"].as_str().unwrap().to_string())
        })
        .collect();
    assert!(keys.windows(2).all(|w| w[0] <= w[1]), "{keys:?}");
    assert_eq!(get("/patches?status=bogus").status(), StatusCode::BAD_REQUEST);

    let first = pending.iter().find(|v| v["patch"]["build_id"] == "b2").unwrap();
    let id = first["patch"]["patch_id"].as_str().unwrap();
    let one: Value = get(&format!("/patches/{id}")).json().unwrap();
    assert_eq!(one["patch"]["edit"], first["patch"]["edit"]);
    assert_eq!(one["build"]["project"]["slug"], "acme/pricing");
    assert_eq!(get("/patches/nope").status(), StatusCode::NOT_FOUND);

    assert_eq!(post(&format!("/patches/{id}/propose"), json!({})).status(), StatusCode::FORBIDDEN);
    let bad = post(&format!("/patches/{id}/verdict"), json!({"verdict": "maybe", "analyst_id": "ana"}));
    assert_eq!(bad.status(), StatusCode::BAD_REQUEST);
    let bad = post(&format!("/patches/{id}/verdict"), json!({"analyst_id": "ana"}));
    assert_eq!(bad.status(), StatusCode::BAD_REQUEST);
    let v = post(&format!("/patches/{id}/verdict"), json!({"verdict": "correct", "analyst_id": "ana", "note": "ok"}));
    assert_eq!(v.status(), StatusCode::OK);
    let again = post(&format!("/patches/{id}/verdict"), json!({"verdict": "overfitting", "analyst_id": "bob"}));
    assert_eq!(again.status(), StatusCode::CONFLICT);

    let other = pending.iter().find(|v| v["patch"]["patch_id"] != id).unwrap()["patch"]["patch_id"].as_str().unwrap();
    let v = post(&format!("/patches/{other}/verdict"), json!({"verdict": "overfitting", "analyst_id": "ana"}));
    assert_eq!(v.status(), StatusCode::OK);
    let now_pending: Vec<Value> = get("/patches?status=pending").json().unwrap();
    assert_eq!(now_pending.len(), pending.len() - 2);
    assert!(now_pending.iter().all(|v| v["patch"]["patch_id"] != other && v["patch"]["patch_id"] != id));
    let decided: Vec<Value> = get("/patches?status=correct").json().unwrap();
    assert_eq!(decided.len(), 1);

    let p = post(&format!("/patches/{id}/propose"), json!({}));
    assert_eq!(p.status(), StatusCode::OK);
    let p: Value = p.json().unwrap();
    assert_eq!(p["branch"], format!("repairbot/{id}"));
    let repo = std::path::Path::new(p["repository"].as_str().unwrap());
    let text = std::fs::read_to_string(repo.join("src/pricing.ml")).unwrap();
    assert!(text.contains(first["patch"]["edit"].as_str().unwrap().lines().find(|l| l.starts_with("+ ")).unwrap().trim_start_matches('+')));

    let stats: Value = get("/stats").json().unwrap();
    assert_eq!(stats["stats"]["interesting"], 5);
    let shares: f64 = stats["taxonomy_percent"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((shares - 100.0).abs() <= 0.02);
    assert!(stats["response_times"].as_array().unwrap().iter().any(|t| t["patch_to_verdict"].is_i64()));
}

#[test]
fn hooks_trigger_immediate_attempts() {
    let dir = tempfile::tempdir().unwrap();
    let feed = fixture(dir.path());
    let server = serve(&state(dir.path()), &feed, &["--mode", "hook"]);
    let http = client();
    let hook = |body: &str| {
        http.post(format!("{}/hooks", server.base)).header("content-type", "application/json").body(body.to_string()).send().unwrap()
    };
    assert_eq!(hook("{not json").status(), StatusCode::BAD_REQUEST);
    assert_eq!(hook(r#"{"build_id": "b4", "status": "passed"}"#).status(), StatusCode::OK);
    assert_eq!(hook(r#"{"build_id": "b2", "status": "failed"}"#).status(), StatusCode::ACCEPTED);
    let dup = hook(r#"{"build_id": "b2", "status": "failed"}"#);
    assert_eq!(dup.status(), StatusCode::OK);
    assert_eq!(dup.json::<Value>().unwrap()["decision"], "ignored");

    let deadline = Instant::now() + Duration::from_secs(30);
    loop {
        let pending: Vec<Value> = http.get(format!("{}/patches?status=pending", server.base)).send().unwrap().json().unwrap();
        if !pending.is_empty() {
            assert!(pending.iter().all(|v| v["patch"]["build_id"] == "b2"));
            break;
        }
        assert!(Instant::now() < deadline, "hook never produced a patch");
        std::thread::sleep(Duration::from_millis(100));
    }
    let stats: Value = http.get(format!("{}/stats", server.base)).send().unwrap().json().unwrap();
    assert_eq!(stats["stats"]["interesting"], 1);
}

#[test]
fn serve_runs_periodic_windows() {
    let dir = tempfile::tempdir().unwrap();
    let feed = fixture(dir.path());
    // Windows far in the past are due at once, so the scheduler catches up.
    let server = serve(&state(dir.path()), &feed, &["--interval-secs", "7200", "--start", "2017-01-15T00:00:00Z"]);
    let http = client();
    let deadline = Instant::now() + Duration::from_secs(30);
    loop {
        let stats: Value = http.get(format!("{}/stats", server.base)).send().unwrap().json().unwrap();
        if stats["stats"]["interesting"] == 5 && stats["stats"]["patched_builds"] == 2 {
            break;
        }
        assert!(Instant::now() < deadline, "{stats:#}");
        std::thread::sleep(Duration::from_millis(100));
    }
}
