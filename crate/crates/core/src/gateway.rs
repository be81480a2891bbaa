//! REST gateway over a loaded ensemble.
//!
//! Routes:
//!
//! - `POST /v1/predict` runs one forward call per request (see [`crate::wire`]).
//! - `GET /v1/models` describes the loaded ensemble.
//! - `GET /healthz` answers 200 once the ensemble is loaded, 503 before.
//!
//! Requests run on a multi-threaded runtime with a fixed number of worker
//! threads that all share one read-only [`Ensemble`].

use std::future::Future;
use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::body::Body;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::{oneshot, Notify};

use crate::ensemble::{load_ensemble, Ensemble, ModelManifest};
use crate::error::{Error, Result};
use crate::policy::{apply_policy, votes_from_output};
use crate::wire::{decode_request, render_response, EnsembleInfo, ErrorBody};

/// In-flight requests get this long to finish after a shutdown signal.
pub const DRAIN_DEADLINE: Duration = Duration::from_secs(5);

/// Largest request body accepted, in bytes.
pub const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

#[derive(Clone, Default)]
pub struct AppState {
    ensemble: Arc<OnceLock<Arc<Ensemble>>>,
}

impl AppState {
    pub fn loading() -> Self {
        Self::default()
    }

    pub fn ready(ensemble: Arc<Ensemble>) -> Self {
        let state = Self::default();
        state.set_ensemble(ensemble);
        state
    }

    /// First call wins; the ensemble is never replaced.
    pub fn set_ensemble(&self, ensemble: Arc<Ensemble>) {
        let _ = self.ensemble.set(ensemble);
    }

    pub fn ensemble(&self) -> Option<&Arc<Ensemble>> {
        self.ensemble.get()
    }
}

fn json_response(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_response(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    let body = ErrorBody {
        error: code.into(),
        message: message.into(),
    };
    json_response(status, serde_json::to_vec(&body).expect("error body serializes"))
}

fn status_for(err: &Error) -> (StatusCode, &'static str) {
    match err {
        Error::BadRequest(_) | Error::ShapeMismatch(_) | Error::EmptyBatch | Error::BadImage(_) => {
            (StatusCode::BAD_REQUEST, "bad_request")
        }
        Error::BadPolicy(_) | Error::BadK { .. } | Error::NotBinary { .. } => {
            (StatusCode::BAD_REQUEST, "bad_policy")
        }
        Error::BatchTooLarge { .. } => (StatusCode::PAYLOAD_TOO_LARGE, "batch_too_large"),
        Error::PolicyUnavailable => (StatusCode::UNPROCESSABLE_ENTITY, "policy_unavailable"),
        _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
    }
}

fn from_error(err: &Error) -> Response {
    let (status, code) = status_for(err);
    if status.is_server_error() {
        return error_response(status, code, "internal error");
    }
    error_response(status, code, err.to_string())
}

fn predict_inner(ensemble: &Ensemble, body: &[u8]) -> Result<Vec<u8>> {
    let (batch, policy) = decode_request(body, ensemble.preprocess_spec().pixel_scale)?;
    if batch.batch_size() > ensemble.max_batch() {
        return Err(Error::BatchTooLarge {
            batch: batch.batch_size(),
            max: ensemble.max_batch(),
        });
    }
    if let Some(p) = &policy {
        if !ensemble.binary_compatible() {
            return Err(Error::PolicyUnavailable);
        }
        p.check(ensemble.len())?;
    }
    let out = ensemble.forward(&batch)?;
    let combined = match policy {
        Some(p) => Some(apply_policy(p, &votes_from_output(&out, ensemble)?)?),
        None => None,
    };
    Ok(render_response(ensemble, &out, combined.as_deref()))
}

/// Full `/v1/predict` handling for one request body, without HTTP framing.
pub fn predict_response(ensemble: &Ensemble, body: &[u8]) -> Response {
    match catch_unwind(AssertUnwindSafe(|| predict_inner(ensemble, body))) {
        Ok(Ok(bytes)) => json_response(StatusCode::OK, bytes),
        Ok(Err(err)) => from_error(&err),
        Err(_) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal error"),
    }
}

pub fn models_body(ensemble: &Ensemble) -> Vec<u8> {
    serde_json::to_vec(&EnsembleInfo::describe(ensemble)).expect("models body serializes")
}

fn not_ready() -> Response {
    error_response(
        StatusCode::SERVICE_UNAVAILABLE,
        "not_ready",
        "ensemble is still loading",
    )
}

async fn predict(State(state): State<AppState>, body: Body) -> Response {
    let Some(ensemble) = state.ensemble() else {
        return not_ready();
    };
    let bytes = match axum::body::to_bytes(body, MAX_BODY_BYTES).await {
        Ok(b) => b,
        Err(_) => {
            return error_response(
                StatusCode::PAYLOAD_TOO_LARGE,
                "body_too_large",
                format!("request body exceeds {MAX_BODY_BYTES} bytes or was truncated"),
            )
        }
    };
    predict_response(ensemble, &bytes)
}

async fn models(State(state): State<AppState>) -> Response {
    match state.ensemble() {
        Some(e) => json_response(StatusCode::OK, models_body(e)),
        None => not_ready(),
    }
}

async fn health(State(state): State<AppState>) -> Response {
    match state.ensemble() {
        Some(_) => json_response(StatusCode::OK, br#"{"status":"ok"}"#.to_vec()),
        None => json_response(
            StatusCode::SERVICE_UNAVAILABLE,
            br#"{"status":"loading"}"#.to_vec(),
        ),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/predict", post(predict))
        .route("/v1/models", get(models))
        .route("/healthz", get(health))
        .fallback(|| async { error_response(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .method_not_allowed_fallback(|| async {
            error_response(
                StatusCode::METHOD_NOT_ALLOWED,
                "method_not_allowed",
                "method not allowed on this route",
            )
        })
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains for at most [`DRAIN_DEADLINE`].
pub async fn serve_until<F>(listener: TcpListener, state: AppState, shutdown: F) -> Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    let signalled = Arc::new(Notify::new());
    let notify = signalled.clone();
    let server = axum::serve(listener, router(state)).with_graceful_shutdown(async move {
        shutdown.await;
        notify.notify_one();
    });
    let drain_expired = async {
        signalled.notified().await;
        tokio::time::sleep(DRAIN_DEADLINE).await;
    };
    tokio::select! {
        res = server => res.map_err(|e| Error::Http(e.to_string())),
        () = drain_expired => Ok(()),
    }
}

/// Where the server gets its ensemble from.
#[derive(Debug, Clone)]
pub enum EnsembleSource {
    Manifest(PathBuf),
    Loaded(Arc<Ensemble>),
}

/// Loads the ensemble off the request threads and publishes it to `state`.
pub async fn load_into(state: &AppState, source: EnsembleSource) -> Result<Arc<Ensemble>> {
    let ensemble = match source {
        EnsembleSource::Loaded(e) => e,
        EnsembleSource::Manifest(path) => tokio::task::spawn_blocking(move || {
            let manifest = ModelManifest::from_path(&path)?;
            load_ensemble(&manifest).map(Arc::new)
        })
        .await
        .map_err(|e| Error::Http(format!("loader task failed: {e}")))??,
    };
    state.set_ensemble(ensemble.clone());
    Ok(ensemble)
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub source: EnsembleSource,
    pub addr: SocketAddr,
    pub workers: usize,
}

fn runtime(workers: usize) -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(workers.max(1))
        .thread_name("ensemblegate-worker")
        .enable_all()
        .build()
        .map_err(|e| Error::Http(format!("cannot start runtime: {e}")))
}

async fn start(
    config: ServeConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
    on_ready: impl FnOnce(SocketAddr, &Arc<Ensemble>),
) -> Result<()> {
    let listener = TcpListener::bind(config.addr)
        .await
        .map_err(|source| Error::Bind {
            addr: config.addr.to_string(),
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| Error::Bind {
        addr: config.addr.to_string(),
        source,
    })?;
    let state = AppState::loading();
    let (abort_tx, abort_rx) = oneshot::channel::<()>();
    let server = tokio::spawn(serve_until(listener, state.clone(), async move {
        tokio::select! {
            () = shutdown => {}
            _ = abort_rx => {}
        }
    }));

    match load_into(&state, config.source).await {
        Ok(ensemble) => on_ready(addr, &ensemble),
        Err(e) => {
            let _ = abort_tx.send(());
            let _ = server.await;
            return Err(e);
        }
    }
    let res = server
        .await
        .map_err(|e| Error::Http(format!("server task failed: {e}")))?;
    drop(abort_tx);
    res
}

/// Runs the server on the current thread until `shutdown` resolves.
///
/// The listener is bound before the ensemble loads, so `/healthz` reports
/// 503 until loading finishes. A load failure stops the server and is
/// returned.
pub fn run(
    config: ServeConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
    on_ready: impl FnOnce(SocketAddr, &Arc<Ensemble>),
) -> Result<()> {
    runtime(config.workers)?.block_on(start(config, shutdown, on_ready))
}

/// Resolves on SIGINT or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        () = ctrl_c => {}
        () = term => {}
    }
}

/// A server running on its own thread, for embedding and tests.
pub struct ServerHandle {
    addr: SocketAddr,
    ensemble: Arc<Ensemble>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<Result<()>>>,
}

impl ServerHandle {
    /// Starts serving and returns once the ensemble is loaded.
    pub fn spawn(config: ServeConfig) -> Result<Self> {
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let (ready_tx, ready_rx) = std::sync::mpsc::channel();
        let thread = std::thread::Builder::new()
            .name("ensemblegate-server".into())
            .spawn(move || {
                let shutdown = async move {
                    let _ = stop_rx.await;
                };
                let ready = ready_tx.clone();
                run(config, shutdown, move |addr, ensemble| {
                    let _ = ready.send(Ok((addr, ensemble.clone())));
                })
                .inspect_err(|e| {
                    let _ = ready_tx.send(Err(e.to_string()));
                })
            })
            .map_err(|e| Error::Http(format!("cannot spawn server thread: {e}")))?;

        match ready_rx.recv() {
            Ok(Ok((addr, ensemble))) => Ok(ServerHandle {
                addr,
                ensemble,
                stop: Some(stop_tx),
                thread: Some(thread),
            }),
            _ => match thread.join() {
                Ok(Err(e)) => Err(e),
                _ => Err(Error::Http("server thread exited during startup".into())),
            },
        }
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn ensemble(&self) -> &Arc<Ensemble> {
        &self.ensemble
    }

    /// Signals shutdown and waits for in-flight requests to drain.
    pub fn shutdown(mut self) -> Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take().map(|t| t.join()) {
            Some(Ok(res)) => res,
            Some(Err(_)) => Err(Error::Http("server thread panicked".into())),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}
