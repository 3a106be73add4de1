//! HTTP/JSON interface over the session store.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use emotive_core::sim::{render_frames, Frame, Task, RENDER_HZ};

use crate::session::{resolve_text, Answer, Event, LabelInput, QuestionKind, Session, SessionConfig, SessionError, Status};
use crate::store::{fingerprint, Handle, Store, StoreError};

/// Version of every request and response schema below.
pub const API_VERSION: &str = "v1";

/// How background jobs (query generation, training) are run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JobMode {
    /// spawned; clients poll the session status
    Background,
    /// finished before the triggering request returns
    Inline,
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub jobs: JobMode,
}

impl AppState {
    pub fn new(store: Arc<Store>, jobs: JobMode) -> Self {
        Self { store, jobs }
    }

    /// Starts the jobs of sessions left in the training state (after a restart).
    pub fn resume_jobs(&self) {
        for id in self.store.ids() {
            if let Ok(h) = self.store.get(&id) {
                if h.needs_job() {
                    spawn_job(h);
                }
            }
        }
    }

    async fn kick(&self, h: Arc<Handle>) {
        match self.jobs {
            JobMode::Background => spawn_job(h),
            JobMode::Inline => {
                let _ = tokio::task::spawn_blocking(move || report_job(&h)).await;
            }
        }
    }
}

fn report_job(h: &Handle) {
    if let Err(e) = h.run_pending_job() {
        eprintln!("session {}: background job failed: {e}", h.snapshot().id);
    }
}

fn spawn_job(h: Arc<Handle>) {
    tokio::task::spawn_blocking(move || report_job(&h));
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_status))
        .route("/sessions/{id}/queries", get(queries))
        .route("/sessions/{id}/labels", post(labels))
        .route("/sessions/{id}/train", post(train))
        .route("/sessions/{id}/eval/next", get(eval_next))
        .route("/sessions/{id}/eval/answer", post(eval_answer))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/vad", post(vad))
        .with_state(state)
}

/// Error body: `{"error": kind, "message": ..., "indices": [...]}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    indices: Vec<usize>,
}

impl ApiError {
    fn bad_request(message: String) -> Self {
        Self { status: StatusCode::BAD_REQUEST, kind: "bad_request", message, indices: vec![] }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        match e {
            SessionError::Validation { indices, .. } => {
                Self { status: StatusCode::UNPROCESSABLE_ENTITY, kind: "validation", message, indices }
            }
            SessionError::Conflict { indices, .. } => Self { status: StatusCode::CONFLICT, kind: "conflict", message, indices },
            SessionError::State { .. } => Self { status: StatusCode::CONFLICT, kind: "state", message, indices: vec![] },
            SessionError::NotFound(_) => Self { status: StatusCode::NOT_FOUND, kind: "not_found", message, indices: vec![] },
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Session(s) => s.into(),
            other => Self {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                kind: "internal",
                message: other.to_string(),
                indices: vec![],
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.kind, "message": self.message, "indices": self.indices });
        (self.status, Json(body)).into_response()
    }
}

/// `Json` whose rejections use the API error body.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, Self::Rejection> {
        let Json(v) = Json::<T>::from_request(req, state).await?;
        Ok(Self(v))
    }
}

type ApiResult = Result<Response, ApiError>;

fn ok(v: Value) -> ApiResult {
    Ok((StatusCode::OK, Json(v)).into_response())
}

fn check_request_id(id: &str) -> Result<(), ApiError> {
    if id.trim().is_empty() {
        return Err(ApiError::bad_request("request_id must be a non-empty string".into()));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub request_id: String,
    pub config: SessionConfig,
}

async fn create_session(State(st): State<AppState>, ApiJson(req): ApiJson<CreateRequest>) -> ApiResult {
    check_request_id(&req.request_id)?;
    let store = st.store.clone();
    let (h, created) = store.create(req.config, &req.request_id)?;
    if created {
        st.kick(h.clone()).await;
    }
    let s = h.snapshot();
    let code = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((code, Json(status_body(&s))).into_response())
}

fn status_body(s: &Session) -> Value {
    let round = s.current_round();
    json!({
        "session_id": s.id,
        "status": s.status,
        "round": s.rounds.len(),
        "rounds_total": s.config.k,
        "batch_size": s.config.b,
        "labels": s.dataset().len(),
        "missing": round.map(|r| r.missing()).unwrap_or_default(),
    })
}

async fn session_status(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(status_body(&st.store.get(&id)?.snapshot()))
}

#[derive(Serialize)]
struct QueryView<'a> {
    index: usize,
    task: &'a Task<f64>,
    duration: f64,
    frames: Vec<Frame>,
}

async fn queries(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let s = st.store.get(&id)?.snapshot();
    let mut views = Vec::new();
    if s.status == Status::AwaitingLabels {
        if let Some(r) = s.current_round() {
            for i in r.missing() {
                let traj = &r.state.queries[i];
                views.push(QueryView {
                    index: i,
                    task: &r.state.tasks[i],
                    duration: traj.duration(),
                    frames: render_frames(traj, RENDER_HZ),
                });
            }
        }
    }
    ok(json!({
        "session_id": s.id,
        "status": s.status,
        "round": s.rounds.len(),
        "fps": RENDER_HZ,
        "queries": views,
    }))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsRequest {
    pub request_id: String,
    pub labels: Vec<LabelInput>,
}

async fn labels(State(st): State<AppState>, Path(id): Path<String>, ApiJson(req): ApiJson<LabelsRequest>) -> ApiResult {
    check_request_id(&req.request_id)?;
    let h = st.store.get(&id)?;
    let fp = fingerprint(&format!("POST /sessions/{id}/labels"), &req);
    let rid = req.request_id.clone();
    let resp = h.request(&rid, &fp, |s| {
        let stored = s.prepare_labels(&rid, &req.labels)?;
        let round = s.current_round().expect("labeling implies a round");
        let mut after = round.labels.clone();
        for (i, l) in &stored {
            after[*i] = Some(l.clone());
        }
        let missing: Vec<usize> = after.iter().enumerate().filter(|(_, l)| l.is_none()).map(|(i, _)| i).collect();
        let echoed: Vec<Value> = stored
            .iter()
            .map(|(i, l)| {
                let mut v = serde_json::to_value(l).expect("labels serialize");
                v.as_object_mut().expect("label is an object").remove("request_id");
                v["index"] = json!(i);
                v
            })
            .collect();
        let response = json!({
            "session_id": s.id,
            "round": s.rounds.len(),
            "stored": echoed,
            "missing": missing,
        });
        Ok((Event::Labeled { request_id: rid.clone(), fingerprint: fp.clone(), labels: stored, response: response.clone() }, response))
    })?;
    ok(resp)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    pub request_id: String,
}

async fn train(State(st): State<AppState>, Path(id): Path<String>, ApiJson(req): ApiJson<TrainRequest>) -> ApiResult {
    check_request_id(&req.request_id)?;
    let h = st.store.get(&id)?;
    let fp = fingerprint(&format!("POST /sessions/{id}/train"), &req);
    let rid = req.request_id.clone();
    let resp = h.request(&rid, &fp, |s| {
        s.check_train()?;
        let response = json!({ "session_id": s.id, "status": Status::Training, "round": s.rounds.len() });
        Ok((Event::TrainRequested { request_id: rid.clone(), fingerprint: fp.clone(), response: response.clone() }, response))
    })?;
    if h.needs_job() {
        st.kick(h.clone()).await;
    }
    Ok((StatusCode::ACCEPTED, Json(resp)).into_response())
}

async fn eval_next(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let s = st.store.get(&id)?.snapshot();
    let (total, remaining) = s
        .eval
        .as_ref()
        .map(|e| (e.questions.len(), e.answers.iter().filter(|a| a.is_none()).count()))
        .unwrap_or((0, 0));
    let item = if s.status == Status::Evaluating {
        s.next_question().map(|q| {
            let mut v = json!({
                "index": q.index,
                "task": q.task,
                "duration": q.trajectory.duration(),
                "frames": render_frames(&q.trajectory, RENDER_HZ),
            });
            match &q.question {
                QuestionKind::Likert { set, emotion_a, emotion_b } => {
                    v["kind"] = json!("likert");
                    v["set"] = json!(set);
                    v["emotion_a"] = json!(emotion_a);
                    v["emotion_b"] = json!(emotion_b);
                }
                QuestionKind::Choice { options } => {
                    v["kind"] = json!("choice");
                    v["options"] = json!(options);
                }
            }
            v
        })
    } else {
        None
    };
    ok(json!({
        "session_id": s.id,
        "status": s.status,
        "total": total,
        "remaining": remaining,
        "fps": RENDER_HZ,
        "item": item,
    }))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub request_id: String,
    pub index: usize,
    pub answer: Answer,
}

async fn eval_answer(State(st): State<AppState>, Path(id): Path<String>, ApiJson(req): ApiJson<AnswerRequest>) -> ApiResult {
    check_request_id(&req.request_id)?;
    let h = st.store.get(&id)?;
    let fp = fingerprint(&format!("POST /sessions/{id}/eval/answer"), &req);
    let rid = req.request_id.clone();
    let resp = h.request(&rid, &fp, |s| {
        s.check_answer(&rid, req.index, &req.answer)?;
        let ev = s.eval.as_ref().expect("answering implies questions");
        let remaining = ev.answers.iter().enumerate().filter(|(i, a)| a.is_none() && *i != req.index).count();
        let status = if remaining == 0 { Status::Done } else { Status::Evaluating };
        let response = json!({ "session_id": s.id, "index": req.index, "remaining": remaining, "status": status });
        Ok((
            Event::Answered {
                request_id: rid.clone(),
                fingerprint: fp.clone(),
                index: req.index,
                answer: req.answer.clone(),
                response: response.clone(),
            },
            response,
        ))
    })?;
    ok(resp)
}

async fn metrics(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let s = st.store.get(&id)?.snapshot();
    let mut v = serde_json::to_value(s.metrics()).expect("metrics serialize");
    v["session_id"] = json!(s.id);
    ok(v)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VadRequest {
    pub text: String,
}

/// Text to VAD; `found: false` is a normal answer, not an error.
pub fn vad_body(text: &str) -> Value {
    match resolve_text(text) {
        Some(r) => json!({
            "text": text,
            "found": true,
            "vad": r.vad.to_array(),
            "matched": r.matched,
            "provider": r.provider,
        }),
        None => json!({
            "text": text,
            "found": false,
            "vad": null,
            "matched": [],
            "provider": emotive_core::lang::LEXICON_MEAN_PROVIDER,
        }),
    }
}

async fn vad(ApiJson(req): ApiJson<VadRequest>) -> ApiResult {
    ok(vad_body(&req.text))
}
