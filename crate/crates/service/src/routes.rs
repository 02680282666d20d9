use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ehazop_core::formats::{self, event_line, Journal};
use ehazop_core::model::{EnumerationConfig, GuideWord, SubjectSelector, SubjectShape};
use ehazop_core::prompts::TemplateSet;
use ehazop_core::reporting::{self, ReportFormat};
use ehazop_core::session::{CellFilter, CellStatus, FindingLink};
use ehazop_core::{CellId, Command, Finding, SessionEvent, SessionState};
use futures_util::stream::{self, Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;
use tokio::sync::broadcast::Receiver;

use crate::{ApiError, AppState, ErrorCode, SessionHandle};

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/studies", post(create_study))
        .route("/v1/studies/{id}", get(get_study))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/cells", get(list_cells))
        .route("/v1/sessions/{id}/commands", post(submit_command))
        .route("/v1/sessions/{id}/coverage", get(get_coverage))
        .route("/v1/sessions/{id}/findings", get(get_findings))
        .route("/v1/sessions/{id}/summary", get(get_summary))
        .route("/v1/sessions/{id}/report", get(get_report))
        .route("/v1/sessions/{id}/trace-graph", get(get_trace_graph))
        .route("/v1/sessions/{id}/events", get(subscribe_events))
        .route("/v1/sessions/{id}/journal", get(get_journal))
        .fallback(|| async { ApiError::new(ErrorCode::NotFound, "no such endpoint") })
        .with_state(state)
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(q)| q)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

/// Parses an upper-snake enum value from a query string, case-insensitively.
fn enum_param<T: DeserializeOwned>(name: &str, value: &str) -> ApiResult<T> {
    serde_json::from_value(Value::String(value.trim().to_ascii_uppercase()))
        .map_err(|_| ApiError::bad_request(format!("invalid {name} `{value}`")))
}

fn text(content_type: &'static str, body: String) -> Response {
    ([(header::CONTENT_TYPE, content_type)], body).into_response()
}

async fn create_study(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    let study = formats::parse_study(text, None)?;
    let digest = study.digest();
    let cells = ehazop_core::enumerate_cells(&study.system, &study.enumeration_config)?.len();
    let id = state.add_study(study);
    Ok((
        StatusCode::CREATED,
        Json(json!({ "study_id": id, "study_digest": digest, "cell_count": cells })),
    ))
}

async fn get_study(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let study = state.study(&id)?;
    Ok(Json(
        json!({ "study_id": id, "study_digest": study.digest(), "study": study }),
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    study_id: String,
    #[serde(default)]
    config: Option<EnumerationConfig>,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateSession = parse_body(&body)?;
    let id = state.start_session(&req.study_id, req.config)?;
    let info = session_info(&id, &*state.session(&id)?).await;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn session_info(id: &str, handle: &SessionHandle) -> Value {
    let core = handle.core.lock().await;
    let st = core.session.state();
    json!({
        "session_id": id,
        "study_id": handle.study_id,
        "study_digest": st.study_digest(),
        "config": st.config(),
        "cell_count": st.cells().len(),
        "finding_count": st.findings().len(),
        "last_seq": st.last_seq(),
        "closed": st.is_closed(),
        "journal": core.writer.as_ref().map(|w| w.path().display().to_string()),
    })
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let handle = state.session(&id)?;
    Ok(Json(session_info(&id, &handle).await))
}

#[derive(Deserialize, Default)]
struct CellQuery {
    guideword: Option<String>,
    subject: Option<String>,
    shape: Option<String>,
    status: Option<String>,
}

impl CellQuery {
    fn filter(&self, state: &SessionState) -> ApiResult<CellFilter> {
        Ok(CellFilter {
            guideword: self
                .guideword
                .as_deref()
                .map(|g| {
                    g.parse::<GuideWord>()
                        .map_err(|e| ApiError::bad_request(e.to_string()))
                })
                .transpose()?,
            subject: self
                .subject
                .as_deref()
                .map(|s| SubjectSelector::resolve(state.model(), s))
                .transpose()?,
            shape: self
                .shape
                .as_deref()
                .map(|s| enum_param::<SubjectShape>("shape", s))
                .transpose()?,
            status: self
                .status
                .as_deref()
                .map(|s| enum_param::<CellStatus>("status", s))
                .transpose()?,
        })
    }
}

#[derive(Serialize)]
struct CellView {
    id: CellId,
    guideword: GuideWord,
    functions: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    characteristic: Option<String>,
    shape: SubjectShape,
    subject: String,
    subject_label: String,
    status: CellStatus,
    prompt: String,
}

async fn list_cells(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<CellQuery>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let q = query(q)?;
    let handle = state.session(&id)?;
    let core = handle.core.lock().await;
    let st = core.session.state();
    let filter = q.filter(st)?;
    let templates = TemplateSet::bundled();
    let cells = st
        .cell_statuses()
        .filter(|(cell, status)| filter.matches(cell, *status))
        .map(|(cell, status)| {
            let group = cell.subject.group();
            Ok(CellView {
                id: cell.id.clone(),
                guideword: cell.guideword,
                functions: cell.subject.functions.iter().cloned().collect(),
                characteristic: cell.subject.characteristic.clone(),
                shape: cell.subject.shape(),
                subject: group.key(),
                subject_label: group.label(st.model()),
                status,
                prompt: templates
                    .render(cell, st.model())
                    .map_err(|e| ApiError::new(ErrorCode::Validation, e.to_string()))?,
            })
        })
        .collect::<ApiResult<Vec<_>>>()?;
    Ok(Json(json!({ "cells": cells })))
}

#[derive(Deserialize)]
struct CommandRequest {
    #[serde(default)]
    idempotency_token: Option<String>,
    #[serde(flatten)]
    command: Command,
}

async fn submit_command(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let req: CommandRequest = parse_body(&body)?;
    let handle = state.session(&id)?;
    let mut guard = handle.core.lock().await;
    let core = &mut *guard;
    if let Some(token) = &req.idempotency_token {
        if let Some((command, reply)) = core.replies.get(token) {
            return if *command == req.command {
                Ok(Json(reply.clone()))
            } else {
                Err(ApiError::bad_request(format!(
                    "idempotency token `{token}` was already used for a different command"
                )))
            };
        }
    }
    if core.poisoned {
        return Err(ApiError::new(
            ErrorCode::CorruptJournal,
            "an earlier journal write failed; reopen the session from its journal",
        ));
    }
    let pending = core.session.prepare(req.command.clone(), state.now())?;
    if let Some(writer) = core.writer.as_mut() {
        if let Err(e) = writer.append(pending.event()) {
            log::error!("journal append failed for {id}: {e}");
            core.poisoned = true;
            return Err(e.into());
        }
    }
    let event = pending.event().clone();
    let outcome = core.session.commit(pending)?;
    let reply = json!({ "seq": event.seq, "event": event, "outcome": outcome });
    if let Some(token) = req.idempotency_token {
        core.replies.insert(token, (req.command, reply.clone()));
    }
    // Sent under the lock so subscribers see events in seq order.
    let _ = handle.fanout.send(event);
    Ok(Json(reply))
}

async fn get_coverage(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<CellQuery>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let q = query(q)?;
    let handle = state.session(&id)?;
    let core = handle.core.lock().await;
    let st = core.session.state();
    let filter = q.filter(st)?;
    Ok(Json(json!(st.coverage_where(&filter))))
}

#[derive(Serialize)]
struct FindingView<'a> {
    #[serde(flatten)]
    finding: &'a Finding,
    hazard_label: String,
    guideword_label: String,
}

#[derive(Deserialize, Default)]
struct FindingQuery {
    subject: Option<String>,
}

async fn get_findings(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<FindingQuery>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let q = query(q)?;
    let handle = state.session(&id)?;
    let core = handle.core.lock().await;
    let st = core.session.state();
    let selector = q
        .subject
        .as_deref()
        .map(|s| SubjectSelector::resolve(st.model(), s))
        .transpose()?;
    let findings: Vec<_> = st
        .findings()
        .iter()
        .filter(|f| match &selector {
            None => true,
            Some(sel) => st.cell(&f.cell).is_some_and(|c| sel.matches(&c.subject)),
        })
        .map(|f| FindingView {
            finding: f,
            hazard_label: reporting::hazard_label(st, f),
            guideword_label: reporting::guideword_label(st, f),
        })
        .collect();
    let links: Vec<&FindingLink> = st.links().iter().collect();
    Ok(Json(
        json!({ "findings": findings, "links": links, "notes": st.notes() }),
    ))
}

async fn get_summary(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let handle = state.session(&id)?;
    let core = handle.core.lock().await;
    Ok(Json(json!(reporting::summary(core.session.state()))))
}

#[derive(Deserialize, Default)]
struct ReportQuery {
    format: Option<String>,
    subject: Option<String>,
}

async fn get_report(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<ReportQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let q = query(q)?;
    let format: ReportFormat = q
        .format
        .as_deref()
        .unwrap_or("csv")
        .parse()
        .map_err(ApiError::bad_request)?;
    let handle = state.session(&id)?;
    let core = handle.core.lock().await;
    let body = reporting::render_report(
        core.session.state(),
        q.subject.as_deref().unwrap_or("all"),
        format,
    )?;
    let content_type = match format {
        ReportFormat::Csv => "text/csv; charset=utf-8",
        ReportFormat::Txt => "text/plain; charset=utf-8",
        ReportFormat::Md => "text/markdown; charset=utf-8",
    };
    Ok(text(content_type, body))
}

#[derive(Deserialize, Default)]
struct GraphQuery {
    format: Option<String>,
}

async fn get_trace_graph(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<GraphQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let q = query(q)?;
    let handle = state.session(&id)?;
    let core = handle.core.lock().await;
    let graph = reporting::trace_graph(core.session.state());
    Ok(match q.format.as_deref().unwrap_or("json") {
        "json" => Json(graph).into_response(),
        "tgf" => text("text/plain; charset=utf-8", graph.to_tgf()),
        "dot" => text("text/vnd.graphviz; charset=utf-8", graph.to_dot()),
        other => {
            return Err(ApiError::bad_request(format!(
                "unknown graph format `{other}` (expected json, tgf or dot)"
            )))
        }
    })
}

async fn get_journal(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let handle = state.session(&id)?;
    let core = handle.core.lock().await;
    Ok(text(
        "application/x-ndjson",
        Journal::from_session(&core.session).to_text(),
    ))
}

#[derive(Deserialize, Default)]
struct EventsQuery {
    from_seq: Option<u64>,
}

/// Live half of an event subscription.
struct Follow {
    handle: Arc<SessionHandle>,
    rx: Receiver<SessionEvent>,
    next: u64,
    buffered: VecDeque<SessionEvent>,
}

impl Follow {
    async fn next_event(mut self) -> Option<(SessionEvent, Self)> {
        loop {
            if let Some(event) = self.buffered.pop_front() {
                self.next = event.seq + 1;
                return Some((event, self));
            }
            match self.rx.recv().await {
                Ok(event) if event.seq < self.next => continue,
                Ok(event) => {
                    self.next = event.seq + 1;
                    return Some((event, self));
                }
                Err(RecvError::Lagged(_)) => {
                    // Refill the gap from the session itself.
                    let core = self.handle.core.lock().await;
                    self.buffered = core
                        .session
                        .events()
                        .iter()
                        .filter(|e| e.seq >= self.next)
                        .cloned()
                        .collect();
                    // Still under the lock, so no event is sent in between.
                    self.rx = self.rx.resubscribe();
                }
                Err(RecvError::Closed) => return None,
            }
        }
    }
}

fn sse_event(event: &SessionEvent) -> Result<Event, Infallible> {
    Ok(Event::default().id(event.seq.to_string()).data(event_line(event)))
}

async fn subscribe_events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<EventsQuery>, QueryRejection>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let q = query(q)?;
    let from = q.from_seq.unwrap_or(1).max(1);
    let handle = state.session(&id)?;
    let (backlog, follow) = {
        let core = handle.core.lock().await;
        // Subscribing under the lock means nothing falls between the
        // backlog and the live feed.
        let rx = handle.fanout.subscribe();
        let backlog: Vec<SessionEvent> = core
            .session
            .events()
            .iter()
            .filter(|e| e.seq >= from)
            .cloned()
            .collect();
        let next = backlog.last().map_or(from, |e| e.seq + 1);
        (
            backlog,
            Follow {
                handle: handle.clone(),
                rx,
                next,
                buffered: VecDeque::new(),
            },
        )
    };
    let live = stream::unfold(follow, Follow::next_event);
    let events = stream::iter(backlog).chain(live).map(|e| sse_event(&e));
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}
