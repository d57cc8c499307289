use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::Deserialize;
use tokio::sync::{broadcast, OwnedMutexGuard};

use flowforge::catalog::ArtifactKind;
use flowforge::eval::{evaluate_corpus, EvaluationPair, EvaluationReport};
use flowforge::model::{
    parse_inputs, parse_outline, parse_workflow, serialize_inputs, serialize_outline, serialize_workflow,
};
use flowforge::orchestrator::{
    GenerationSession, Orchestrator, OrchestratorError, Phase, PopulateMode, SessionEvent, SubTaskRecord,
};

use crate::api::*;
use crate::error::ApiError;
use crate::state::{is_terminal, AppState, SessionHandle};

type Shared = State<Arc<AppState>>;

/// JSON body whose rejections use the structured error body.
#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
pub struct Body<T>(pub T);

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(r.status(), "BAD_REQUEST", r.body_text())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/v1/createFlow", post(create_flow))
        .route("/v1/populateInputs", post(populate_inputs))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/events", get(events))
        .route("/v1/sessions/{id}/continue", post(continue_session))
        .route("/v1/sessions/{id}/stop", post(stop_session))
        .route("/v1/sessions/{id}/modify", post(modify_session))
        .route("/v1/transcripts/{id}", get(transcript))
        .route("/v1/catalog/{kind}", get(catalog))
        .route("/v1/evaluate", post(evaluate))
        .route("/v1/admin/reload", post(reload))
        .route_layer(middleware::from_fn_with_state(state.clone(), auth));
    Router::new()
        .route("/v1/health", get(health))
        .merge(api)
        .fallback(|| async { ApiError::not_found("such route") })
        .with_state(state)
}

async fn auth(State(st): Shared, req: Request, next: Next) -> Result<Response, ApiError> {
    if let Some(token) = &st.config.auth_token {
        let given = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return Err(ApiError::new(
                StatusCode::UNAUTHORIZED,
                "UNAUTHORIZED",
                "missing or wrong bearer token",
            ));
        }
    }
    Ok(next.run(req).await)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))
}

async fn health(State(st): Shared) -> Json<Health> {
    let engine = st.engine();
    Json(Health {
        status: "ok".into(),
        generator: engine.orchestrator.generator().name().to_owned(),
        version: engine.catalog.version().clone(),
    })
}

async fn create_flow(
    State(st): Shared,
    Body(req): Body<CreateFlowRequest>,
) -> Result<Json<CreateFlowResponse>, ApiError> {
    let engine = st.engine();
    let (outline, record) = blocking(move || engine.orchestrator.create_flow(&req.requirement)).await??;
    Ok(Json(CreateFlowResponse {
        outline: serialize_outline(&outline),
        transcript_ref: st.keep_transcript(record),
    }))
}

async fn populate_inputs(
    State(st): Shared,
    Body(req): Body<PopulateInputsRequest>,
) -> Result<Json<PopulateInputsResponse>, ApiError> {
    let outline = parse_outline(&req.outline).map_err(|e| ApiError::parse("outline", &e))?;
    let mut prefix = Vec::new();
    for (i, p) in req.populated_prefix.iter().enumerate() {
        let field = format!("populated_prefix[{i}]");
        let head = outline.step(p.order).ok_or_else(|| {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "BAD_PREFIX",
                format!("outline has no step {}", p.order),
            )
            .at(field.clone())
        })?;
        let mut step = head.to_step();
        step.inputs = parse_inputs(&p.inputs).map_err(|e| ApiError::parse(&field, &e))?;
        prefix.push(step);
    }
    let engine = st.engine();
    let (inputs, record, sites) = blocking(move || {
        engine
            .orchestrator
            .populate_inputs(&req.requirement, &outline, &prefix, req.target_order)
    })
    .await??;
    Ok(Json(PopulateInputsResponse {
        step_inputs: serialize_inputs(&inputs),
        choices_offered: sites,
        transcript_ref: st.keep_transcript(record),
    }))
}

async fn transcript(State(st): Shared, Path(id): Path<String>) -> Result<Json<SubTaskRecord>, ApiError> {
    st.transcript(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found("such transcript"))
}

/// Runs `f` on the session in the background, holding its lock until done.
fn launch<F>(handle: Arc<SessionHandle>, mut guard: OwnedMutexGuard<GenerationSession>, f: F)
where
    F: FnOnce(&Orchestrator, &mut GenerationSession) -> Result<(), OrchestratorError> + Send + 'static,
{
    handle.running.store(true, Ordering::SeqCst);
    tokio::task::spawn_blocking(move || {
        // Failures are published as `failed` events.
        let _ = f(&handle.engine.orchestrator, &mut guard);
        handle.running.store(false, Ordering::SeqCst);
    });
}

fn run_to(auto_continue: bool) -> impl FnOnce(&Orchestrator, &mut GenerationSession) -> Result<(), OrchestratorError> {
    move |o, s| {
        o.create_outline(s)?;
        if auto_continue && s.phase == Phase::OutlineReady {
            match o.config().populate_mode {
                PopulateMode::Sequential => o.continue_session(s, None)?,
                PopulateMode::Parallel => o.batch_populate(s)?,
            }
        }
        Ok(())
    }
}

fn created(id: String, parent_id: Option<String>) -> (StatusCode, Json<SessionCreated>) {
    (
        StatusCode::CREATED,
        Json(SessionCreated {
            events: format!("/v1/sessions/{id}/events"),
            session_id: id,
            parent_id,
        }),
    )
}

async fn create_session(
    State(st): Shared,
    Body(req): Body<CreateSessionRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let engine = st.engine();
    let session = engine.orchestrator.new_session(&req.requirement)?;
    let id = session.id.clone();
    let handle = st.add_session(engine, session);
    let guard = handle.session.clone().lock_owned().await;
    launch(handle.clone(), guard, run_to(req.auto_continue));
    Ok(created(id, None))
}

fn find(st: &AppState, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
    st.session(id).ok_or_else(|| ApiError::not_found("such session"))
}

fn view(s: &GenerationSession) -> SessionView {
    SessionView {
        id: s.id.clone(),
        parent_id: s.parent_id.clone(),
        superseded_by: s.superseded_by.clone(),
        requirement: s.requirement.clone(),
        phase: s.phase,
        outline: s.outline.as_ref().map(serialize_outline),
        workflow: s.workflow.as_ref().map(serialize_workflow),
        last_seq: s.events.last().map_or(0, |e| e.seq),
    }
}

async fn get_session(State(st): Shared, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let handle = find(&st, &id)?;
    let s = handle.session.lock().await;
    Ok(Json(view(&s)))
}

async fn continue_session(
    State(st): Shared,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let up_to = if body.iter().all(u8::is_ascii_whitespace) {
        None
    } else {
        serde_json::from_slice::<ContinueRequest>(&body)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", e.to_string()))?
            .up_to
    };
    let handle = find(&st, &id)?;
    let guard = handle.session.clone().lock_owned().await;
    if let Some(next) = &guard.superseded_by {
        return Err(OrchestratorError::Superseded(next.clone()).into());
    }
    if !matches!(guard.phase, Phase::OutlineReady | Phase::Populating(_)) {
        return Err(OrchestratorError::InvalidPhase {
            op: "continue",
            phase: guard.phase,
        }
        .into());
    }
    let v = view(&guard);
    launch(handle, guard, move |o, s| o.continue_session(s, up_to));
    Ok((StatusCode::ACCEPTED, Json(v)))
}

/// Waits for a running command to notice the cancel flag, then takes the
/// session lock.
async fn interrupt(handle: &SessionHandle) -> OwnedMutexGuard<GenerationSession> {
    if handle.running.load(Ordering::SeqCst) {
        handle.cancel.store(true, Ordering::SeqCst);
    }
    handle.session.clone().lock_owned().await
}

async fn stop_session(State(st): Shared, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let handle = find(&st, &id)?;
    let mut guard = interrupt(&handle).await;
    if guard.phase != Phase::Stopped {
        handle.engine.orchestrator.stop_session(&mut guard)?;
    }
    Ok(Json(view(&guard)))
}

async fn modify_session(
    State(st): Shared,
    Path(id): Path<String>,
    Body(req): Body<ModifyRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let handle = find(&st, &id)?;
    let mut guard = interrupt(&handle).await;
    let next = handle
        .engine
        .orchestrator
        .modify_requirement(&mut guard, &req.requirement)?;
    drop(guard);
    let next_id = next.id.clone();
    let next_handle = st.add_session(st.engine(), next);
    let next_guard = next_handle.session.clone().lock_owned().await;
    launch(next_handle.clone(), next_guard, run_to(req.auto_continue));
    Ok(created(next_id, Some(id)))
}

#[derive(Deserialize)]
struct EventsQuery {
    after: Option<u64>,
}

struct Feed {
    pending: VecDeque<SessionEvent>,
    rx: broadcast::Receiver<SessionEvent>,
    handle: Arc<SessionHandle>,
    last: u64,
    done: bool,
}

/// Server-sent events: `id` is the sequence number, `event` the payload
/// kind and `data` the JSON event. Reconnect with `Last-Event-ID` (or
/// `?after=`) to resume. The stream ends after a terminal event.
async fn events(
    State(st): Shared,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let handle = find(&st, &id)?;
    let header_after = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .map(str::trim);
    let after = match header_after {
        Some(v) => v.parse::<u64>().map_err(|_| {
            ApiError::new(
                StatusCode::BAD_REQUEST,
                "BAD_REQUEST",
                format!("bad Last-Event-ID `{v}`"),
            )
            .at("Last-Event-ID")
        })?,
        None => q.after.unwrap_or(0),
    };
    let (backlog, rx) = handle.subscribe(after);
    let feed = Feed {
        pending: backlog.into(),
        rx,
        handle,
        last: after,
        done: false,
    };
    let stream = stream::unfold(feed, |mut f| async move {
        loop {
            if f.done {
                return None;
            }
            if let Some(e) = f.pending.pop_front() {
                if e.seq <= f.last {
                    continue;
                }
                f.last = e.seq;
                f.done = is_terminal(&e);
                return Some((Ok(sse_event(&e)), f));
            }
            match f.rx.recv().await {
                Ok(e) => f.pending.push_back(e),
                Err(broadcast::error::RecvError::Lagged(_)) => f.pending.extend(f.handle.events_after(f.last)),
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

fn sse_event(e: &SessionEvent) -> Event {
    Event::default()
        .id(e.seq.to_string())
        .event(e.payload.name())
        .data(serde_json::to_string(e).expect("events serialize"))
}

#[derive(Deserialize)]
struct CatalogQuery {
    scope: Option<String>,
}

async fn catalog(
    State(st): Shared,
    Path(kind): Path<String>,
    Query(q): Query<CatalogQuery>,
) -> Result<Json<CatalogListing>, ApiError> {
    let kind: ArtifactKind = kind
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, "BAD_KIND", e).at("kind"))?;
    let engine = st.engine();
    let artifacts = engine.catalog.list_artifacts(kind, q.scope.as_deref())?;
    Ok(Json(CatalogListing {
        kind,
        scope: q.scope,
        version: engine.catalog.version().clone(),
        artifacts,
    }))
}

async fn evaluate(Body(req): Body<EvaluateRequest>) -> Result<Json<EvaluationReport>, ApiError> {
    let mut pairs = Vec::with_capacity(req.pairs.len());
    for (i, p) in req.pairs.into_iter().enumerate() {
        let expected = parse_workflow(&p.expected).map_err(|e| ApiError::parse(&format!("pairs[{i}].expected"), &e))?;
        let generated =
            parse_workflow(&p.generated).map_err(|e| ApiError::parse(&format!("pairs[{i}].generated"), &e))?;
        pairs.push(EvaluationPair {
            id: p.id,
            expected,
            generated,
        });
    }
    let report = blocking(move || evaluate_corpus(&pairs))
        .await?
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "EMPTY", e.to_string()).at("pairs"))?;
    Ok(Json(report))
}

async fn reload(State(st): Shared) -> Result<Json<Health>, ApiError> {
    let s = st.clone();
    let engine = blocking(move || s.reload()).await??;
    Ok(Json(Health {
        status: "reloaded".into(),
        generator: engine.orchestrator.generator().name().to_owned(),
        version: engine.catalog.version().clone(),
    }))
}
