//! HTTP service: conversations, multipart questions, SSE event streams,
//! audit traces and dataset metadata.
//!
//! Turns run on the blocking pool. Events are mirrored per conversation so
//! that streams can replay from any sequence number while a turn is running.

use std::collections::HashMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use odqa_core::orchestrator::audit::EventEnvelope;
use odqa_core::orchestrator::{Conversation, Engine};
use odqa_core::retrieval::UserQuestion;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::watch;

#[derive(Debug, Clone, Copy)]
pub struct ServiceLimits {
    pub max_conversations: usize,
    pub max_attachment_bytes: usize,
}

struct ConvHandle {
    conv: Mutex<Conversation>,
    busy: AtomicBool,
    events: Mutex<Vec<EventEnvelope>>,
    latest: watch::Sender<u64>,
    audit_path: Option<PathBuf>,
}

impl ConvHandle {
    fn events_after(&self, seq: u64) -> Vec<EventEnvelope> {
        self.events.lock().unwrap().iter().filter(|e| e.seq > seq).cloned().collect()
    }
}

pub struct AppState {
    engine: Arc<Engine>,
    limits: ServiceLimits,
    conversations: Mutex<HashMap<String, Arc<ConvHandle>>>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>, limits: ServiceLimits) -> Arc<AppState> {
        Arc::new(AppState { engine, limits, conversations: Mutex::new(HashMap::new()) })
    }

    fn get(&self, id: &str) -> Option<Arc<ConvHandle>> {
        self.conversations.lock().unwrap().get(id).cloned()
    }

    /// Waits until no turn is in flight.
    pub async fn drain(&self) {
        loop {
            let busy = self.conversations.lock().unwrap().values().any(|h| h.busy.load(Ordering::SeqCst));
            if !busy {
                return;
            }
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": message.into()}))).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    // text plus two attachments, with room for multipart framing
    let body_limit = state.limits.max_attachment_bytes.saturating_mul(2).saturating_add(1 << 20);
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/conversations", post(create_conversation))
        .route("/conversations/{id}", get(conversation_status).delete(delete_conversation))
        .route("/conversations/{id}/questions", post(submit_question))
        .route("/conversations/{id}/events", get(events))
        .route("/conversations/{id}/trace", get(trace))
        .route("/datasets", get(list_datasets))
        .route("/datasets/{id}", get(dataset))
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state)
}

async fn create_conversation(State(st): State<Arc<AppState>>) -> Response {
    let mut map = st.conversations.lock().unwrap();
    if map.len() >= st.limits.max_conversations {
        return error(StatusCode::SERVICE_UNAVAILABLE, "conversation capacity reached");
    }
    let id = uuid::Uuid::new_v4().simple().to_string();
    let (conv, audit_path) = match &st.engine.data_dir {
        Some(dir) => {
            let path = dir.join("conversations").join(&id).join("audit.jsonl");
            match Conversation::persisted(&id, &path) {
                Ok(c) => (c, Some(path)),
                Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, format!("cannot create audit log: {e}")),
            }
        }
        None => (Conversation::new(&id), None),
    };
    let handle = ConvHandle {
        conv: Mutex::new(conv),
        busy: AtomicBool::new(false),
        events: Mutex::new(Vec::new()),
        latest: watch::channel(0).0,
        audit_path,
    };
    map.insert(id.clone(), Arc::new(handle));
    (StatusCode::CREATED, Json(json!({"conversation_id": id}))).into_response()
}

async fn conversation_status(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some(h) = st.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown conversation {id}"));
    };
    let events = h.events.lock().unwrap();
    Json(json!({
        "conversation_id": id,
        "busy": h.busy.load(Ordering::SeqCst),
        "turns": events.iter().filter(|e| e.kind.is_terminal()).count(),
        "last_seq": events.last().map_or(0, |e| e.seq),
    }))
    .into_response()
}

async fn delete_conversation(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let mut map = st.conversations.lock().unwrap();
    match map.get(&id) {
        None => error(StatusCode::NOT_FOUND, format!("unknown conversation {id}")),
        Some(h) if h.busy.load(Ordering::SeqCst) => error(StatusCode::CONFLICT, "a turn is in flight"),
        Some(_) => {
            map.remove(&id);
            StatusCode::NO_CONTENT.into_response()
        }
    }
}

struct Submission {
    text: String,
    image: Option<(String, Vec<u8>)>,
    pdf: Option<(String, Vec<u8>)>,
}

async fn read_submission(mut mp: Multipart, max: usize) -> Result<Submission, Response> {
    let mut sub = Submission { text: String::new(), image: None, pdf: None };
    loop {
        let field = match mp.next_field().await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => return Err(error(e.status(), e.body_text())),
        };
        let name = field.name().unwrap_or("").to_string();
        let file_name = field.file_name().map(str::to_string);
        let content_type = field.content_type().map(str::to_string);
        let bytes = field.bytes().await.map_err(|e| error(e.status(), e.body_text()))?;
        if bytes.len() > max {
            return Err(error(
                StatusCode::PAYLOAD_TOO_LARGE,
                format!("field `{name}` has {} bytes; the limit is {max}", bytes.len()),
            ));
        }
        match name.as_str() {
            "text" | "question" => {
                sub.text = String::from_utf8(bytes.to_vec())
                    .map_err(|_| error(StatusCode::BAD_REQUEST, "question text is not UTF-8"))?
            }
            "image" => sub.image = Some((content_type.unwrap_or_else(|| "image/png".into()), bytes.to_vec())),
            "pdf" => sub.pdf = Some((file_name.unwrap_or_else(|| "attachment.pdf".into()), bytes.to_vec())),
            other => return Err(error(StatusCode::BAD_REQUEST, format!("unexpected field `{other}`"))),
        }
    }
    Ok(sub)
}

async fn submit_question(State(st): State<Arc<AppState>>, Path(id): Path<String>, mp: Multipart) -> Response {
    let Some(handle) = st.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown conversation {id}"));
    };
    let sub = match read_submission(mp, st.limits.max_attachment_bytes).await {
        Ok(s) => s,
        Err(r) => return r,
    };
    if sub.text.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "the `text` field is required");
    }
    let mut question = UserQuestion::new(sub.text);
    if let Some((media_type, bytes)) = sub.image {
        question = question.with_image(&media_type, &bytes);
    }
    if let Some((name, bytes)) = sub.pdf {
        question = match question.with_pdf(&name, &bytes) {
            Ok(q) => q,
            Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        };
    }
    if handle.busy.compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst).is_err() {
        return error(StatusCode::CONFLICT, "a turn is already in flight for this conversation");
    }
    let turn = handle.conv.lock().unwrap().turns.len() + 1;
    let engine = st.engine.clone();
    let h = handle.clone();
    tokio::task::spawn_blocking(move || {
        let mut conv = h.conv.lock().unwrap();
        engine.handle_turn(&mut conv, question, &mut |ev| {
            h.events.lock().unwrap().push(ev.clone());
            h.latest.send_replace(ev.seq);
        });
        drop(conv);
        h.busy.store(false, Ordering::SeqCst);
    });
    (StatusCode::ACCEPTED, Json(json!({"conversation_id": id, "turn": turn}))).into_response()
}

#[derive(Debug, Default, Deserialize)]
pub struct EventsQuery {
    /// Resume after this sequence number; `Last-Event-ID` takes precedence.
    after: Option<u64>,
    /// Keep the stream open for live events (default). With `false` the
    /// stream ends once the recorded events are replayed.
    follow: Option<bool>,
}

fn sse_event(e: &EventEnvelope) -> Event {
    Event::default().id(e.seq.to_string()).event(e.kind.as_str()).data(e.to_line())
}

fn event_stream(handle: Arc<ConvHandle>, cursor: u64, follow: bool) -> impl Stream<Item = Result<Event, Infallible>> {
    let rx = handle.latest.subscribe();
    stream::unfold((handle, cursor, rx, Vec::<EventEnvelope>::new()), move |(h, mut cursor, mut rx, mut buf)| async move {
        loop {
            if buf.is_empty() {
                buf = h.events_after(cursor);
                buf.reverse();
            }
            if let Some(e) = buf.pop() {
                cursor = e.seq;
                let ev = sse_event(&e);
                return Some((Ok(ev), (h, cursor, rx, buf)));
            }
            if !follow || rx.changed().await.is_err() {
                return None;
            }
        }
    })
}

async fn events(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Response {
    let Some(handle) = st.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown conversation {id}"));
    };
    let last_id = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|s| s.trim().parse::<u64>().ok());
    let cursor = last_id.or(q.after).unwrap_or(0);
    Sse::new(event_stream(handle, cursor, q.follow.unwrap_or(true))).keep_alive(KeepAlive::default()).into_response()
}

async fn trace(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some(handle) = st.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown conversation {id}"));
    };
    let body = match &handle.audit_path {
        Some(p) if p.exists() => match tokio::fs::read(p).await {
            Ok(b) => b,
            Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        },
        Some(_) => Vec::new(),
        None => handle.events.lock().unwrap().iter().map(|e| e.to_line() + "\n").collect::<String>().into_bytes(),
    };
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

async fn list_datasets(State(st): State<Arc<AppState>>) -> Response {
    let list: Vec<_> = st
        .engine
        .catalog
        .docs()
        .iter()
        .map(|d| json!({"id": d.id, "title": d.title, "source_url": d.source_url}))
        .collect();
    Json(list).into_response()
}

async fn dataset(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match st.engine.catalog.get(&id) {
        Some(meta) => Json(meta).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown dataset {id}")),
    }
}
