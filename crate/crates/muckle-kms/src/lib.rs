//! Networked quantum-key delivery in the ETSI GS QKD 014 style.
//!
//! Wraps the in-process simulator from `muckle_core::qkd` in a small
//! HTTP/1.1 + JSON service and provides an HTTP client implementing the same
//! [`QkdClient`] trait, so a handshake endpoint can switch between in-process
//! and networked delivery without code changes:
//!
//! - `GET /api/v1/keys/{partner_id}/enc_keys` reserves a fresh key for the
//!   pair `{requester, partner_id}` and returns its id and bytes.
//! - `GET /api/v1/keys/{partner_id}/dec_keys?key_ID=…` fetches an
//!   already-issued key by id.
//!
//! Responses carry `{"keys": [{"key_ID": …, "key": …}]}` with the key
//! base64-encoded and the id hex-encoded, mirroring the ETSI field names so
//! a real key manager can substitute. The requester identifies itself with
//! an `x-client-id` header — a plain claim standing in for the mutually
//! authenticated channel a production deployment would use. Store failures
//! map onto status codes (404 unknown id, 409 repeated delivery, 403 wrong
//! pair, 503 no key available) and the client maps them back onto the same
//! [`QkdError`] values the in-process store returns.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use muckle_core::qkd::{QkdClient, QkdKeyHandle, QkdKeyId, QkdStore, QKD_KEY_LEN};
use muckle_core::QkdError;

/// Response body: a container of delivered keys. The service always returns
/// exactly one per request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyContainer {
    pub keys: Vec<KeyEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyEntry {
    /// Hex-encoded 16-byte key id.
    #[serde(rename = "key_ID")]
    pub key_id: String,
    /// Base64-encoded 32-byte key.
    pub key: String,
}

fn status_for(err: &QkdError) -> StatusCode {
    match err {
        QkdError::NotFound => StatusCode::NOT_FOUND,
        QkdError::AlreadyConsumed => StatusCode::CONFLICT,
        QkdError::Unauthorized => StatusCode::FORBIDDEN,
        QkdError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        QkdError::Transport(_) => StatusCode::BAD_GATEWAY,
    }
}

fn qkd_error_for_status(code: u16) -> QkdError {
    match code {
        404 => QkdError::NotFound,
        409 => QkdError::AlreadyConsumed,
        403 => QkdError::Unauthorized,
        503 => QkdError::Unavailable("service reported no available key".into()),
        other => QkdError::Transport(format!("unexpected status {other}")),
    }
}

enum ApiError {
    BadRequest(String),
    Store(QkdError),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Store(e) => (status_for(&e), e.to_string()),
        };
        (status, Json(serde_json::json!({ "message": message }))).into_response()
    }
}

fn client_id(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get("x-client-id")
        .and_then(|v| v.to_str().ok())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .ok_or_else(|| ApiError::BadRequest("missing x-client-id header".into()))
}

fn container(key_id: &QkdKeyId, key: &[u8]) -> Json<KeyContainer> {
    Json(KeyContainer {
        keys: vec![KeyEntry {
            key_id: hex::encode(key_id),
            key: BASE64.encode(key),
        }],
    })
}

async fn enc_keys(
    State(store): State<Arc<QkdStore>>,
    Path(partner_id): Path<String>,
    headers: HeaderMap,
) -> Result<Json<KeyContainer>, ApiError> {
    let requester = client_id(&headers)?;
    let handle = store
        .get_key(&requester, &partner_id)
        .map_err(ApiError::Store)?;
    Ok(container(&handle.key_id, &handle.key))
}

#[derive(Deserialize)]
struct DecKeysParams {
    #[serde(rename = "key_ID")]
    key_id: String,
}

async fn dec_keys(
    State(store): State<Arc<QkdStore>>,
    Path(partner_id): Path<String>,
    Query(params): Query<DecKeysParams>,
    headers: HeaderMap,
) -> Result<Json<KeyContainer>, ApiError> {
    let requester = client_id(&headers)?;
    let key_id: QkdKeyId = hex::decode(&params.key_id)
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| ApiError::BadRequest("key_ID must be 16 hex-encoded bytes".into()))?;
    let key = store
        .get_key_by_id(&requester, &partner_id, &key_id)
        .map_err(ApiError::Store)?;
    Ok(container(&key_id, &key))
}

fn router(store: Arc<QkdStore>) -> Router {
    Router::new()
        .route("/api/v1/keys/{partner_id}/enc_keys", get(enc_keys))
        .route("/api/v1/keys/{partner_id}/dec_keys", get(dec_keys))
        .with_state(store)
}

/// A running service instance. Dropping the handle shuts the server down and
/// joins its thread; [`KmsHandle::wait`] instead blocks until the process is
/// killed (for running as a foreground service).
pub struct KmsHandle {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl KmsHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Serve until the process exits.
    pub fn wait(mut self) {
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for KmsHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

/// Start serving `store` on `bind` (e.g. `"127.0.0.1:0"`) from a dedicated
/// thread with its own single-threaded runtime, so callers stay synchronous.
pub fn spawn_server(store: Arc<QkdStore>, bind: &str) -> io::Result<KmsHandle> {
    let listener = std::net::TcpListener::bind(bind)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("muckle-kms".into())
        .spawn(move || {
            let runtime = tokio::runtime::Builder::new_current_thread()
                .enable_io()
                .build()
                .expect("building the service runtime");
            runtime.block_on(async move {
                let listener =
                    tokio::net::TcpListener::from_std(listener).expect("adopting the listener");
                axum::serve(listener, router(store))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .expect("serving key requests");
            });
        })?;
    Ok(KmsHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// HTTP client for the service. Implements [`QkdClient`], so sessions can
/// use it exactly like the in-process store; the per-call requester becomes
/// the `x-client-id` header.
#[derive(Clone)]
pub struct HttpQkdClient {
    agent: ureq::Agent,
    base_url: String,
}

impl HttpQkdClient {
    pub fn new(base_url: &str) -> HttpQkdClient {
        HttpQkdClient {
            agent: ureq::Agent::new_with_defaults(),
            base_url: base_url.trim_end_matches('/').to_string(),
        }
    }

    fn fetch(&self, url: &str, requester: &str) -> Result<KeyEntry, QkdError> {
        let mut resp = self
            .agent
            .get(url)
            .header("x-client-id", requester)
            .call()
            .map_err(|err| match err {
                ureq::Error::StatusCode(code) => qkd_error_for_status(code),
                other => QkdError::Transport(other.to_string()),
            })?;
        let body: KeyContainer = resp
            .body_mut()
            .read_json()
            .map_err(|e| QkdError::Transport(format!("malformed response: {e}")))?;
        body.keys
            .into_iter()
            .next()
            .ok_or_else(|| QkdError::Transport("empty key container".into()))
    }
}

fn decode_key(entry: &KeyEntry) -> Result<Vec<u8>, QkdError> {
    let key = BASE64
        .decode(&entry.key)
        .map_err(|e| QkdError::Transport(format!("malformed key encoding: {e}")))?;
    if key.len() != QKD_KEY_LEN {
        return Err(QkdError::Transport(format!(
            "delivered key has {} bytes, expected {QKD_KEY_LEN}",
            key.len()
        )));
    }
    Ok(key)
}

impl QkdClient for HttpQkdClient {
    fn get_key(&self, requester: &str, partner: &str) -> Result<QkdKeyHandle, QkdError> {
        let url = format!("{}/api/v1/keys/{partner}/enc_keys", self.base_url);
        let entry = self.fetch(&url, requester)?;
        let key_id: QkdKeyId = hex::decode(&entry.key_id)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| QkdError::Transport("malformed key id in response".into()))?;
        Ok(QkdKeyHandle {
            key_id,
            key: decode_key(&entry)?,
        })
    }

    fn get_key_by_id(
        &self,
        requester: &str,
        partner: &str,
        key_id: &QkdKeyId,
    ) -> Result<Vec<u8>, QkdError> {
        let url = format!(
            "{}/api/v1/keys/{partner}/dec_keys?key_ID={}",
            self.base_url,
            hex::encode(key_id)
        );
        let entry = self.fetch(&url, requester)?;
        if entry.key_id != hex::encode(key_id) {
            return Err(QkdError::Transport(
                "service answered with a different key id".into(),
            ));
        }
        decode_key(&entry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use muckle_core::qkd::{MissPolicy, QKD_KEY_ID_LEN};

    fn serve() -> (KmsHandle, Arc<QkdStore>) {
        let store = QkdStore::with_seed([5; 32], MissPolicy::Strict);
        store.open_link("alice", "bob");
        let handle = spawn_server(Arc::clone(&store), "127.0.0.1:0").unwrap();
        (handle, store)
    }

    #[test]
    fn status_mapping_round_trips() {
        use std::mem::discriminant;
        for err in [
            QkdError::NotFound,
            QkdError::AlreadyConsumed,
            QkdError::Unauthorized,
            QkdError::Unavailable("x".into()),
        ] {
            let back = qkd_error_for_status(status_for(&err).as_u16());
            assert_eq!(discriminant(&back), discriminant(&err), "{err}");
        }
    }

    #[test]
    fn http_delivery_matches_in_process_delivery() {
        let (server, store) = serve();
        let client = HttpQkdClient::new(&server.base_url());
        let handle = client.get_key("alice", "bob").unwrap();
        assert_eq!(handle.key.len(), QKD_KEY_LEN);
        // The partner reads the same store directly, without HTTP.
        let key = store.get_key_by_id("bob", "alice", &handle.key_id).unwrap();
        assert_eq!(key, handle.key);
    }

    #[test]
    fn two_http_clients_complete_a_matched_delivery() {
        let (server, _store) = serve();
        let initiator = HttpQkdClient::new(&server.base_url());
        let responder = HttpQkdClient::new(&server.base_url());
        let handle = initiator.get_key("alice", "bob").unwrap();
        let key = responder
            .get_key_by_id("bob", "alice", &handle.key_id)
            .unwrap();
        assert_eq!(key, handle.key);
    }

    #[test]
    fn store_errors_come_back_as_the_same_error_values() {
        let (server, store) = serve();
        let client = HttpQkdClient::new(&server.base_url());
        assert_eq!(
            client.get_key_by_id("bob", "alice", &[9; QKD_KEY_ID_LEN]),
            Err(QkdError::NotFound)
        );
        let handle = client.get_key("alice", "bob").unwrap();
        client
            .get_key_by_id("bob", "alice", &handle.key_id)
            .unwrap();
        assert_eq!(
            client.get_key_by_id("bob", "alice", &handle.key_id),
            Err(QkdError::AlreadyConsumed)
        );
        store.open_link("bob", "carol");
        assert_eq!(
            client.get_key_by_id("carol", "bob", &handle.key_id),
            Err(QkdError::Unauthorized)
        );
        assert!(matches!(
            client.get_key("alice", "dave"),
            Err(QkdError::Unavailable(_))
        ));
    }

    #[test]
    fn missing_client_header_is_a_bad_request() {
        let (server, _store) = serve();
        let err = ureq::get(&format!("{}/api/v1/keys/bob/enc_keys", server.base_url()))
            .call()
            .unwrap_err();
        assert!(matches!(err, ureq::Error::StatusCode(400)), "{err}");
    }

    #[test]
    fn concurrent_fetches_deliver_exactly_once_over_http() {
        let (server, _store) = serve();
        let client = Arc::new(HttpQkdClient::new(&server.base_url()));
        let handle = client.get_key("alice", "bob").unwrap();
        let mut threads = Vec::new();
        for _ in 0..8 {
            let client = Arc::clone(&client);
            let key_id = handle.key_id;
            threads.push(std::thread::spawn(move || {
                client.get_key_by_id("bob", "alice", &key_id).is_ok()
            }));
        }
        let successes: usize = threads
            .into_iter()
            .map(|t| t.join().unwrap() as usize)
            .sum();
        assert_eq!(successes, 1);
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        let client = HttpQkdClient::new("http://127.0.0.1:1");
        assert!(matches!(
            client.get_key("alice", "bob"),
            Err(QkdError::Transport(_))
        ));
    }
}
