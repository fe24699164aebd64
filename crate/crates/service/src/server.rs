//! HTTP routes over a shared [`Node`].
//!
//! | Method | Path | Body / query | Response |
//! |--------|------|--------------|----------|
//! | POST | `/trials/{id}/manifest` | [`ManifestRequest`] | [`WriteResponse`] |
//! | POST | `/trials/{id}/records` | multipart upload | [`RecordResponse`] |
//! | GET | `/trials/{id}/records` | | indexed records |
//! | GET | `/trials/{id}/completeness` | | completeness |
//! | GET | `/trials/{id}/files/{name}/history` | | indexed records, oldest first |
//! | GET | `/trials/{id}/files/{name}/verify` | `?record_id=` | verdict |
//! | GET | `/trials/{id}/verify` | | trial verification |
//! | POST | `/whitelist/add`, `/whitelist/remove` | [`WhitelistRequest`] | [`WriteResponse`] |
//! | POST | `/owner` | [`OwnerRequest`] | [`WriteResponse`] |
//! | PUT | `/blobs/{cid}` | raw bytes | [`BlobPutResponse`] |
//! | GET | `/blobs/{cid}` | | raw bytes |
//! | GET | `/accounts/{key}/nonce` | | [`NonceResponse`] |
//! | GET | `/events` | `?cursor=` or `Last-Event-ID` | server-sent events |
//! | GET | `/events/log` | `?cursor=` | [`EventLog`] |
//! | GET | `/blocks/{height}` | | block |
//! | GET | `/tx/{id}` | | [`TxResponse`] (202 while pending) |
//! | GET | `/chain/verify` | | chain report |
//! | GET | `/status` | | [`StatusResponse`] |
//!
//! Writes answer 200 once sealed, or 202 in interval mode. Errors carry an
//! [`ErrorEnvelope`]; a write that was sealed but rejected by the contract
//! includes its receipt.

use std::collections::VecDeque;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::{Arc, PoisonError, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use custody_core::blobstore::ContentId;
use custody_core::{Digest, PublicKey};
use futures::Stream;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::watch;

use crate::api::{
    ApiError, Auth, ErrorEnvelope, ManifestRequest, OwnerRequest, RecordPayload, RecordUpload,
    WhitelistRequest, WriteResponse,
};
use crate::error::bad_request;
use crate::node::Node;

pub const MAX_BODY_BYTES: usize = 1 << 30;

/// A node behind a lock, plus a channel that ticks whenever the event log
/// may have grown.
#[derive(Clone)]
pub struct SharedNode {
    node: Arc<RwLock<Node>>,
    events: Arc<watch::Sender<u64>>,
}

impl SharedNode {
    pub fn new(node: Node) -> Self {
        let (tx, _) = watch::channel(node.event_count());
        SharedNode {
            node: Arc::new(RwLock::new(node)),
            events: Arc::new(tx),
        }
    }

    pub fn read<R>(&self, f: impl FnOnce(&Node) -> R) -> R {
        f(&self.node.read().unwrap_or_else(PoisonError::into_inner))
    }

    /// Runs a mutation and wakes event listeners afterwards.
    pub fn write<R>(&self, f: impl FnOnce(&mut Node) -> R) -> R {
        let (out, count) = {
            let mut node = self.node.write().unwrap_or_else(PoisonError::into_inner);
            let out = f(&mut node);
            (out, node.event_count())
        };
        self.events.send_replace(count);
        out
    }

    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.events.subscribe()
    }
}

pub struct HttpError(pub ApiError);

impl From<ApiError> for HttpError {
    fn from(e: ApiError) -> Self {
        HttpError(e)
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(ErrorEnvelope { error: self.0 })).into_response()
    }
}

type ApiResult<T> = Result<T, HttpError>;

async fn blocking<R: Send + 'static>(f: impl FnOnce() -> R + Send + 'static) -> ApiResult<R> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| HttpError(ApiError::new(500, "Internal", e.to_string())))
}

fn write_reply(w: WriteResponse) -> Response {
    reply(&w, &w)
}

fn reply<T: Serialize>(w: &WriteResponse, body: &T) -> Response {
    let status = match w {
        WriteResponse::Sealed { .. } => StatusCode::OK,
        WriteResponse::Pending { .. } => StatusCode::ACCEPTED,
    };
    (status, Json(body)).into_response()
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| HttpError(bad_request(format!("invalid JSON body: {e}"))))
}

pub fn router(shared: SharedNode) -> Router {
    Router::new()
        .route("/trials/{id}/manifest", post(set_manifest))
        .route("/trials/{id}/records", post(submit_record).get(records))
        .route("/trials/{id}/completeness", get(completeness))
        .route("/trials/{id}/files/{name}/history", get(history))
        .route("/trials/{id}/files/{name}/verify", get(verify_file))
        .route("/trials/{id}/verify", get(verify_trial))
        .route("/whitelist/add", post(whitelist_add))
        .route("/whitelist/remove", post(whitelist_remove))
        .route("/owner", post(transfer_ownership))
        .route("/blobs/{cid}", put(put_blob).get(get_blob))
        .route("/accounts/{key}/nonce", get(nonce))
        .route("/events", get(event_stream))
        .route("/events/log", get(event_log))
        .route("/blocks/{height}", get(block))
        .route("/tx/{id}", get(tx))
        .route("/chain/verify", get(chain_verify))
        .route("/status", get(status))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(shared)
}

// ---------------------------------------------------------------- writes

async fn set_manifest(State(s): State<SharedNode>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: ManifestRequest = parse_json(&body)?;
    let w = blocking(move || s.write(|n| n.set_manifest(&id, &req))).await??;
    Ok(write_reply(w))
}

async fn whitelist_add(State(s): State<SharedNode>, body: Bytes) -> ApiResult<Response> {
    let req: WhitelistRequest = parse_json(&body)?;
    let w = blocking(move || s.write(|n| n.whitelist(true, &req))).await??;
    Ok(write_reply(w))
}

async fn whitelist_remove(State(s): State<SharedNode>, body: Bytes) -> ApiResult<Response> {
    let req: WhitelistRequest = parse_json(&body)?;
    let w = blocking(move || s.write(|n| n.whitelist(false, &req))).await??;
    Ok(write_reply(w))
}

async fn transfer_ownership(State(s): State<SharedNode>, body: Bytes) -> ApiResult<Response> {
    let req: OwnerRequest = parse_json(&body)?;
    let w = blocking(move || s.write(|n| n.transfer_ownership(&req))).await??;
    Ok(write_reply(w))
}

async fn read_upload(mut form: Multipart) -> Result<RecordUpload, ApiError> {
    let bad = |m: String| bad_request(m);
    let mut filename = None;
    let mut file = None;
    let mut file_hash = None;
    let mut sender = None;
    let mut nonce = None;
    let mut signature = None;
    while let Some(field) = form.next_field().await.map_err(|e| bad(e.to_string()))? {
        let name = field.name().unwrap_or_default().to_string();
        if name == "file" {
            file = Some(field.bytes().await.map_err(|e| bad(e.to_string()))?.to_vec());
            continue;
        }
        let text = field.text().await.map_err(|e| bad(e.to_string()))?;
        match name.as_str() {
            "filename" => filename = Some(text),
            "file_hash" => file_hash = Some(text),
            "sender" => sender = Some(text),
            "nonce" => nonce = Some(text),
            "signature" => signature = Some(text),
            other => return Err(bad(format!("unexpected multipart field {other:?}"))),
        }
    }
    let need = |v: Option<String>, what: &str| v.ok_or_else(|| bad(format!("missing field {what:?}")));
    let payload = match (file, file_hash) {
        (Some(bytes), None) => RecordPayload::Bytes(bytes),
        (None, Some(h)) => RecordPayload::Hash(
            Digest::from_hex(&h).map_err(|e| ApiError::new(422, "MalformedHash", e.to_string()))?,
        ),
        _ => return Err(bad("exactly one of \"file\" and \"file_hash\" is required".into())),
    };
    let auth = Auth {
        sender: need(sender, "sender")?.parse().map_err(|e| bad(format!("sender: {e}")))?,
        nonce: need(nonce, "nonce")?.parse().map_err(|e| bad(format!("nonce: {e}")))?,
        signature: need(signature, "signature")?
            .parse()
            .map_err(|e| bad(format!("signature: {e}")))?,
    };
    Ok(RecordUpload {
        filename: need(filename, "filename")?,
        payload,
        auth,
    })
}

async fn submit_record(State(s): State<SharedNode>, Path(id): Path<String>, form: Multipart) -> ApiResult<Response> {
    let upload = read_upload(form).await?;
    let r = blocking(move || s.write(|n| n.submit_record(&id, &upload))).await??;
    Ok(reply(&r.write, &r))
}

async fn put_blob(State(s): State<SharedNode>, Path(cid): Path<String>, body: Bytes) -> ApiResult<Response> {
    let cid: ContentId = cid.parse().map_err(|e| HttpError(bad_request(format!("cid: {e}"))))?;
    if !cid.matches(&body) {
        return Err(HttpError(ApiError::new(
            422,
            "CidMismatch",
            format!("body does not hash to {cid}"),
        )));
    }
    let r = blocking(move || s.write(|n| n.put_blob(&body))).await??;
    Ok((StatusCode::CREATED, Json(r)).into_response())
}

// ----------------------------------------------------------------- reads

async fn records(State(s): State<SharedNode>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.read(|n| n.records(&id))?).into_response())
}

async fn completeness(State(s): State<SharedNode>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.read(|n| n.completeness(&id))?).into_response())
}

async fn history(State(s): State<SharedNode>, Path((id, name)): Path<(String, String)>) -> ApiResult<Response> {
    Ok(Json(s.read(|n| n.history(&id, &name))?).into_response())
}

#[derive(Debug, Deserialize)]
struct RecordQuery {
    record_id: Option<u64>,
}

async fn verify_file(
    State(s): State<SharedNode>,
    Path((id, name)): Path<(String, String)>,
    Query(q): Query<RecordQuery>,
) -> ApiResult<Response> {
    let v = blocking(move || s.read(|n| n.verify_file(&id, &name, q.record_id))).await??;
    Ok(Json(v).into_response())
}

async fn verify_trial(State(s): State<SharedNode>, Path(id): Path<String>) -> ApiResult<Response> {
    let v = blocking(move || s.read(|n| n.verify_trial(&id))).await??;
    Ok(Json(v).into_response())
}

async fn get_blob(State(s): State<SharedNode>, Path(cid): Path<String>) -> ApiResult<Response> {
    let cid: ContentId = cid.parse().map_err(|e| HttpError(bad_request(format!("cid: {e}"))))?;
    let bytes = blocking(move || s.read(|n| n.get_blob(&cid))).await??;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

async fn nonce(State(s): State<SharedNode>, Path(key): Path<String>) -> ApiResult<Response> {
    let key: PublicKey = key.parse().map_err(|e| HttpError(bad_request(format!("key: {e}"))))?;
    Ok(Json(s.read(|n| n.nonce(&key))).into_response())
}

#[derive(Debug, Deserialize)]
struct CursorQuery {
    cursor: Option<u64>,
}

async fn event_log(State(s): State<SharedNode>, Query(q): Query<CursorQuery>) -> ApiResult<Response> {
    Ok(Json(s.read(|n| n.events(q.cursor.unwrap_or(0)))?).into_response())
}

/// Replays events from the cursor, then follows new ones. Each SSE `id` is
/// the cursor to resume from after that event.
async fn event_stream(
    State(s): State<SharedNode>,
    Query(q): Query<CursorQuery>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>> {
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .map(|v| v.parse::<u64>().map_err(|_| HttpError(bad_request("Last-Event-ID must be an integer"))))
        .transpose()?;
    let cursor = q.cursor.or(resume).unwrap_or(0);
    s.read(|n| n.events(cursor).map(|_| ()))?;
    let rx = s.subscribe();
    let stream = futures::stream::unfold(
        (s, rx, cursor, VecDeque::new()),
        |(s, mut rx, mut cursor, mut buf)| async move {
            loop {
                if let Some(ev) = buf.pop_front() {
                    return Some((Ok(sse_event(&ev)), (s, rx, cursor, buf)));
                }
                rx.borrow_and_update();
                let batch = s.read(|n| n.events(cursor)).ok()?;
                if !batch.events.is_empty() {
                    cursor = batch.next_cursor;
                    buf.extend(batch.events);
                    continue;
                }
                rx.changed().await.ok()?;
            }
        },
    );
    Ok(Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}

fn sse_event(ev: &custody_core::contract::Event) -> SseEvent {
    let data = serde_json::to_value(ev).unwrap_or_default();
    let kind = data["kind"].as_str().unwrap_or("event").to_string();
    SseEvent::default()
        .id((ev.seq + 1).to_string())
        .event(kind)
        .data(data.to_string())
}

async fn block(State(s): State<SharedNode>, Path(height): Path<u64>) -> ApiResult<Response> {
    Ok(Json(s.read(|n| n.block(height))?).into_response())
}

async fn tx(State(s): State<SharedNode>, Path(id): Path<String>) -> ApiResult<Response> {
    let id = Digest::from_hex(&id).map_err(|e| HttpError(bad_request(format!("tx id: {e}"))))?;
    let t = s.read(|n| n.tx(&id))?;
    let status = match t.state {
        crate::api::TxState::Sealed { .. } => StatusCode::OK,
        crate::api::TxState::Pending { .. } => StatusCode::ACCEPTED,
    };
    Ok((status, Json(t)).into_response())
}

async fn chain_verify(State(s): State<SharedNode>) -> ApiResult<Response> {
    Ok(Json(blocking(move || s.read(Node::chain_check)).await?).into_response())
}

async fn status(State(s): State<SharedNode>) -> ApiResult<Response> {
    Ok(Json(s.read(Node::status)).into_response())
}

// --------------------------------------------------------------- running

/// Seals pending transactions every `interval` until the task is dropped.
pub fn spawn_sealer(shared: SharedNode, interval: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(interval);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tick.tick().await;
            let s = shared.clone();
            let sealed = tokio::task::spawn_blocking(move || s.write(|n| n.seal_pending())).await;
            if let Ok(Err(e)) = sealed {
                tracing::error!(error = %e, "sealing failed");
            }
        }
    })
}

/// Serves until `shutdown` resolves. Starts the interval sealer when the
/// node is in interval mode.
pub async fn serve(
    listener: TcpListener,
    shared: SharedNode,
    block_interval: Duration,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let sealer = (shared.read(Node::seal_mode) == crate::config::SealMode::Interval)
        .then(|| spawn_sealer(shared.clone(), block_interval));
    let result = axum::serve(listener, router(shared)).with_graceful_shutdown(shutdown).await;
    if let Some(h) = sealer {
        h.abort();
    }
    result
}

/// A server on its own runtime thread, bound to an ephemeral local port.
/// Stops when dropped.
pub struct BackgroundServer {
    addr: SocketAddr,
    shared: SharedNode,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
}

impl BackgroundServer {
    pub fn start(shared: SharedNode, block_interval: Duration) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let node = shared.clone();
        std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = TcpListener::from_std(std_listener).expect("listener");
                let shutdown = async move {
                    let _ = stopped.await;
                };
                if let Err(e) = serve(listener, node, block_interval, shutdown).await {
                    tracing::error!(error = %e, "server exited");
                }
            });
            runtime.shutdown_background();
        });
        Ok(BackgroundServer {
            addr,
            shared,
            stop: Some(stop),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shared(&self) -> &SharedNode {
        &self.shared
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
    }
}
