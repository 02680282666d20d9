use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use ehazop_core::fixtures;
use ehazop_core::formats;
use ehazop_service::{router, AppState, Loaded};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn send(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, String) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, String) {
    send(app, "GET", uri, None).await
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, body) = get(app, uri).await;
    (status, serde_json::from_str(&body).unwrap_or(Value::Null))
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let (status, body) = send(app, "POST", uri, Some(body.to_string())).await;
    (status, serde_json::from_str(&body).unwrap())
}

/// A fresh Ari session; returns the router and the session path prefix.
async fn ari_session(state: AppState) -> (Router, String) {
    let app = router(state);
    let study = std::fs::read_to_string(fixtures::ari_study_path()).unwrap();
    let (status, body) = send(&app, "POST", "/v1/studies", Some(study)).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let created: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(created["cell_count"], 77);
    let (status, session) = post(&app, "/v1/sessions", json!({ "study_id": created["study_id"] })).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(session["last_seq"], 1);
    let base = format!("/v1/sessions/{}", session["session_id"].as_str().unwrap());
    (app, base)
}

/// Serves a copy of the bundled case-study journal.
fn fixture_app() -> (Router, String, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ari.journal");
    std::fs::copy(fixtures::case_study_journal_path(), &path).unwrap();
    let state = AppState::default();
    let Loaded::Journal { session_id, .. } = state.load(&path).unwrap() else {
        panic!("fixture should load as a journal");
    };
    (router(state), format!("/v1/sessions/{session_id}"), dir)
}

fn record(cell: &str, hazard: &str) -> Value {
    json!({ "command": "record_finding", "cell": cell, "hazard": hazard, "notes": "n" })
}

#[tokio::test]
async fn cells_carry_statuses_and_prompts() {
    let (app, base) = ari_session(AppState::default()).await;
    let (status, body) = get_json(&app, &format!("{base}/cells?guideword=less&subject=Soc1")).await;
    assert_eq!(status, StatusCode::OK);
    let cells = body["cells"].as_array().unwrap();
    let ids: Vec<_> = cells.iter().map(|c| c["id"].as_str().unwrap()).collect();
    assert_eq!(
        ids,
        ["LESS/Soc1", "LESS/Soc1/physical_design", "LESS/Soc1/autonomy"]
    );
    assert_eq!(
        cells[2]["prompt"],
        "What if this function were provided with ⟨LESS⟩ ⟨AUTONOMY⟩ than the user expects?"
    );
    assert!(cells.iter().all(|c| c["status"] == "UNEXPLORED"));

    let (_, all) = get_json(&app, &format!("{base}/cells")).await;
    assert_eq!(all["cells"].as_array().unwrap().len(), 77);
    let (_, generic) = get_json(&app, &format!("{base}/cells?shape=generic_characteristic")).await;
    assert_eq!(generic["cells"].as_array().unwrap().len(), 14);
}

#[tokio::test]
async fn bad_queries_and_unknown_ids_are_reported() {
    let (app, base) = ari_session(AppState::default()).await;
    let (status, body) = get_json(&app, &format!("{base}/cells?status=done")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "BAD_REQUEST");
    let (status, body) = get_json(&app, &format!("{base}/cells?subject=Nav1")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "NOT_FOUND");
    let (status, body) = get_json(&app, "/v1/sessions/session-99/coverage").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["details"]["id"], "session-99");
    let (status, body) = post(&app, "/v1/sessions", json!({ "study_id": "study-99" })).await;
    assert_eq!(
        (status, body["code"].as_str()),
        (StatusCode::NOT_FOUND, Some("NOT_FOUND"))
    );
    let (status, body) = send(
        &app,
        "POST",
        &format!("{base}/commands"),
        Some("{not json".into()),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    let (status, _) = get(&app, "/v1/nowhere").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_study_upload_lists_violations() {
    let app = router(AppState::default());
    let mut study: Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures::ari_study_path()).unwrap()).unwrap();
    study["system"]["functions"] = json!([]);
    let (status, body) = post(&app, "/v1/studies", study).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "VALIDATION");
    assert!(!body["details"]["violations"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn duplicate_finding_conflicts_with_the_earlier_id() {
    let (app, base) = ari_session(AppState::default()).await;
    let commands = format!("{base}/commands");
    let (status, reply) = post(&app, &commands, record("MORE/Soc1", "Lack of privacy")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(reply["outcome"]["finding"]["id"], "F01");
    let (_, before) = get(&app, &format!("{base}/journal")).await;

    let (status, err) = post(&app, &commands, record("LESS/Soc1/autonomy", "lack of privacy")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "CONFLICT_DUPLICATE_FINDING");
    assert_eq!(err["details"]["existing_finding"], "F01");
    let (_, after) = get(&app, &format!("{base}/journal")).await;
    assert_eq!(before, after, "a rejected command must not change the session");

    let mut distinct = record("LESS/Soc1/autonomy", "lack of privacy");
    distinct["distinct_presentation"] = json!(true);
    let (status, reply) = post(&app, &commands, distinct).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(reply["outcome"]["finding"]["id"], "F02");
}

#[tokio::test]
async fn engine_errors_map_to_codes() {
    let (app, base) = ari_session(AppState::default()).await;
    let commands = format!("{base}/commands");
    let (status, err) = post(&app, &commands, record("MORE/Soc1", "robot sadness")).await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("UNRESOLVED_HAZARD"))
    );
    assert_eq!(err["details"]["hazard"], "robot sadness");
    let (status, err) = post(&app, &commands, record("MORE/Nav1", "deception")).await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::NOT_FOUND, Some("NOT_FOUND"))
    );
    let (status, err) = post(
        &app,
        &commands,
        json!({ "command": "link_findings", "from": "F01", "to": "F02", "relation": "RELATED" }),
    )
    .await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::NOT_FOUND, Some("NOT_FOUND"))
    );
    let (status, err) = post(
        &app,
        &commands,
        json!({ "command": "mark_cell", "cell": "MORE/Soc1", "status": "OPEN" }),
    )
    .await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("VALIDATION"))
    );
    let (status, err) = post(&app, &commands, json!({ "command": "fly" })).await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::BAD_REQUEST, Some("BAD_REQUEST"))
    );

    // registering makes the hazard resolvable
    let (status, _) = post(
        &app,
        &commands,
        json!({ "command": "register_hazard", "name": "Robot sadness" }),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (status, reply) = post(&app, &commands, record("MORE/Soc1", "robot sadness")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(reply["outcome"]["finding"]["is_novel"], true);
}

#[tokio::test]
async fn idempotency_token_replays_the_original_reply() {
    let (app, base) = ari_session(AppState::default()).await;
    let commands = format!("{base}/commands");
    let mut cmd = record("MORE/Soc1", "deception");
    cmd["idempotency_token"] = json!("tok-1");
    let (s1, first) = post(&app, &commands, cmd.clone()).await;
    let (s2, second) = post(&app, &commands, cmd).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(first, second);
    let (_, session) = get_json(&app, &base).await;
    assert_eq!(session["finding_count"], 1);
    assert_eq!(session["last_seq"], 2);

    let mut other = record("MORE/Soc1", "robot addiction");
    other["idempotency_token"] = json!("tok-1");
    let (status, err) = post(&app, &commands, other).await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::BAD_REQUEST, Some("BAD_REQUEST"))
    );
}

#[tokio::test]
async fn reads_see_acknowledged_writes_and_are_repeatable() {
    let (app, base) = ari_session(AppState::default()).await;
    let commands = format!("{base}/commands");
    post(
        &app,
        &commands,
        json!({ "command": "open_cell", "cell": "MORE/Soc1" }),
    )
    .await;
    let (_, ack) = post(&app, &commands, record("MORE/Soc1/autonomy", "Deception")).await;
    let id = ack["outcome"]["finding"]["id"].clone();
    let (_, findings) = get_json(&app, &format!("{base}/findings")).await;
    let found = &findings["findings"][0];
    assert_eq!(found["id"], id);
    assert_eq!(found["guideword_label"], "More + Autonomy");
    assert_eq!(found["hazard_label"], "Deception");

    for path in [
        "coverage",
        "findings",
        "summary",
        "report?format=md",
        "trace-graph?format=dot",
        "cells",
    ] {
        let a = get(&app, &format!("{base}/{path}")).await;
        let b = get(&app, &format!("{base}/{path}")).await;
        assert_eq!(a.0, StatusCode::OK, "{path}");
        assert_eq!(a, b, "{path}");
    }
    let (_, coverage) = get_json(&app, &format!("{base}/coverage?status=open")).await;
    assert_eq!(coverage["totals"]["open"], 2);
    assert_eq!(coverage["cells"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn fixture_reports_match_the_golden_tables() {
    let (app, base, _dir) = fixture_app();
    for (subject, file) in [
        ("Soc1", "soc1.csv"),
        ("Coa1", "coa1.csv"),
        ("physical_design", "physical_design.csv"),
    ] {
        let (status, body) = get(&app, &format!("{base}/report?format=csv&subject={subject}")).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(
            body,
            std::fs::read_to_string(fixtures::golden_path(file)).unwrap(),
            "{file}"
        );
    }
    let (_, summary) = get_json(&app, &format!("{base}/summary")).await;
    assert_eq!(summary["total_findings"], 21);
    assert_eq!(summary["novel_findings"], 2);
    let (_, graph) = get_json(&app, &format!("{base}/trace-graph")).await;
    assert_eq!(graph["nodes"].as_array().unwrap().len(), 21);
    let (status, err) = get_json(&app, &format!("{base}/report?format=pdf")).await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::BAD_REQUEST, Some("BAD_REQUEST"))
    );
    // the fixture session is closed
    let (status, err) = post(
        &app,
        &format!("{base}/commands"),
        record("MORE/Cog1", "deception"),
    )
    .await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("VALIDATION"))
    );
}

/// Reads server-sent events from `uri` until `count` have arrived.
async fn read_events(app: &Router, uri: &str, count: usize) -> Vec<(u64, String)> {
    let request = Request::builder().uri(uri).body(Body::empty()).unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    assert_eq!(response.headers()["content-type"], "text/event-stream");
    let mut body = response.into_body();
    let mut buffer = String::new();
    let mut events = Vec::new();
    while events.len() < count {
        let frame = tokio::time::timeout(Duration::from_secs(5), body.frame())
            .await
            .expect("event stream stalled")
            .expect("event stream ended")
            .unwrap();
        let Ok(data) = frame.into_data() else { continue };
        buffer.push_str(std::str::from_utf8(&data).unwrap());
        while let Some(end) = buffer.find("\n\n") {
            let block: String = buffer.drain(..end + 2).collect();
            let mut id = None;
            let mut data = None;
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("id: ") {
                    id = Some(v.parse().unwrap());
                } else if let Some(v) = line.strip_prefix("data: ") {
                    data = Some(v.to_string());
                }
            }
            if let (Some(id), Some(data)) = (id, data) {
                events.push((id, data));
            }
        }
    }
    events
}

#[tokio::test]
async fn fixture_event_stream_reproduces_the_journal() {
    let (app, base, _dir) = fixture_app();
    let journal = std::fs::read_to_string(fixtures::case_study_journal_path()).unwrap();
    let event_lines: Vec<&str> = journal.lines().skip(1).collect();
    let events = read_events(&app, &format!("{base}/events?from_seq=1"), event_lines.len()).await;
    let recorded = events
        .iter()
        .filter(|(_, d)| d.contains(r#""kind":"FINDING_RECORDED""#))
        .count();
    assert_eq!(recorded, 21);
    let seqs: Vec<u64> = events.iter().map(|(s, _)| *s).collect();
    assert_eq!(seqs, (1..=event_lines.len() as u64).collect::<Vec<_>>());
    let header = journal.lines().next().unwrap();
    let rebuilt: String = std::iter::once(header)
        .chain(events.iter().map(|(_, d)| d.as_str()))
        .map(|l| format!("{l}\n"))
        .collect();
    assert_eq!(rebuilt, journal);

    let tail = read_events(
        &app,
        &format!("{base}/events?from_seq=40"),
        event_lines.len() - 39,
    )
    .await;
    assert_eq!(tail[0].0, 40);
    assert_eq!(tail.last().unwrap().0, event_lines.len() as u64);
}

#[tokio::test]
async fn subscribers_receive_live_events_in_order() {
    let (app, base) = ari_session(AppState::default()).await;
    let reader = {
        let app = app.clone();
        let uri = format!("{base}/events?from_seq=1");
        tokio::spawn(async move { read_events(&app, &uri, 6).await })
    };
    let commands = format!("{base}/commands");
    for cell in ["MORE/Soc1", "MORE/Coa1", "MORE/Cog1"] {
        post(&app, &commands, json!({ "command": "open_cell", "cell": cell })).await;
    }
    post(&app, &commands, record("MORE/Soc1", "deception")).await;
    post(&app, &commands, record("MORE/Soc1", "deception")).await; // conflict, not an event
    post(&app, &commands, json!({ "command": "close_session" })).await;
    let events = reader.await.unwrap();
    let seqs: Vec<u64> = events.iter().map(|(s, _)| *s).collect();
    assert_eq!(seqs, [1, 2, 3, 4, 5, 6]);
    let (_, journal) = get(&app, &format!("{base}/journal")).await;
    let lines: Vec<&str> = journal.lines().skip(1).collect();
    let data: Vec<&str> = events.iter().map(|(_, d)| d.as_str()).collect();
    assert_eq!(data, lines);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_commands_are_serialized_into_the_journal_file() {
    let dir = tempfile::tempdir().unwrap();
    let (app, base) = ari_session(AppState::new(Some(dir.path().to_path_buf()))).await;
    let (_, info) = get_json(&app, &base).await;
    let path = std::path::PathBuf::from(info["journal"].as_str().unwrap());

    let cells: Vec<String> = {
        let (_, body) = get_json(&app, &format!("{base}/cells")).await;
        body["cells"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c["id"].as_str().unwrap().to_string())
            .collect()
    };
    let tasks: Vec<_> = cells
        .iter()
        .take(30)
        .map(|cell| {
            let app = app.clone();
            let uri = format!("{base}/commands");
            let body = json!({ "command": "open_cell", "cell": cell });
            tokio::spawn(async move { post(&app, &uri, body).await })
        })
        .collect();
    let mut seqs = Vec::new();
    for task in tasks {
        let (status, reply) = task.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        seqs.push(reply["seq"].as_u64().unwrap());
    }
    seqs.sort_unstable();
    assert_eq!(seqs, (2..=31).collect::<Vec<_>>());

    let (_, served) = get(&app, &format!("{base}/journal")).await;
    assert_eq!(std::fs::read_to_string(&path).unwrap(), served);
    let replayed = formats::replay_file(&path).unwrap();
    assert_eq!(replayed.state().last_seq(), 31);
}

#[tokio::test]
async fn journal_files_are_refused_while_served() {
    let (_app, _base, dir) = fixture_app();
    let again = AppState::default();
    assert!(again.load(dir.path().join("ari.journal")).is_err());
}

#[tokio::test]
async fn slow_subscriber_catches_up_without_gaps() {
    let (app, base) = ari_session(AppState::default()).await;
    let request = Request::builder()
        .uri(format!("{base}/events?from_seq=1"))
        .body(Body::empty())
        .unwrap();
    // Subscribed, but nothing is read until every command has run.
    let response = app.clone().oneshot(request).await.unwrap();
    let commands = format!("{base}/commands");
    for i in 0..400 {
        let (status, _) = post(
            &app,
            &commands,
            json!({ "command": "add_note", "text": format!("note {i}") }),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
    }
    let mut body = response.into_body();
    let mut text = String::new();
    let mut seen = Vec::new();
    while seen.len() < 401 {
        let frame = tokio::time::timeout(Duration::from_secs(5), body.frame())
            .await
            .unwrap()
            .unwrap()
            .unwrap();
        let Ok(data) = frame.into_data() else { continue };
        text.push_str(std::str::from_utf8(&data).unwrap());
        while let Some(end) = text.find("\n\n") {
            let block: String = text.drain(..end + 2).collect();
            if let Some(id) = block.lines().find_map(|l| l.strip_prefix("id: ")) {
                seen.push(id.parse::<u64>().unwrap());
            }
        }
    }
    assert_eq!(seen, (1..=401).collect::<Vec<_>>());
}
