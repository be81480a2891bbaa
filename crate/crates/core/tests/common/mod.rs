#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::State;
use axum::routing::post;
use axum::Router;
use ensemblegate::flexctl::fixtures::{gen_manifest, gen_model, write_manifest, write_model};
use ensemblegate::flexctl::Classes;
use ensemblegate::gateway::{EnsembleSource, ServeConfig, ServerHandle};
use ensemblegate::wire::decode_request;
use ensemblegate::{Ensemble, InputShape, LinearModel, PreprocessSpec};

/// Writes `n` generated models of input dim `dim` plus a manifest into `dir`.
pub fn fixture_manifest(
    dir: &Path,
    n: usize,
    dim: usize,
    classes: Classes,
    budget: u64,
    max_batch: usize,
) -> PathBuf {
    let paths: Vec<PathBuf> = (0..n)
        .map(|i| {
            let p = dir.join(format!("model{i}.lin1.json"));
            let m = gen_model(100 + i as u64, dim, classes, &format!("model{i}")).unwrap();
            write_model(&m, &p).unwrap();
            p
        })
        .collect();
    let out = dir.join("manifest.json");
    let manifest = gen_manifest(&paths, budget, max_batch, PreprocessSpec::default(), &out).unwrap();
    write_manifest(&manifest, &out).unwrap();
    out
}

pub fn serve_manifest(manifest: &Path, workers: usize) -> ServerHandle {
    ServerHandle::spawn(ServeConfig {
        source: EnsembleSource::Manifest(manifest.to_path_buf()),
        addr: "127.0.0.1:0".parse().unwrap(),
        workers,
    })
    .unwrap()
}

pub fn serve_ensemble(ensemble: Ensemble, workers: usize) -> ServerHandle {
    ServerHandle::spawn(ServeConfig {
        source: EnsembleSource::Loaded(Arc::new(ensemble)),
        addr: "127.0.0.1:0".parse().unwrap(),
        workers,
    })
    .unwrap()
}

pub fn binary_model(id: &str, weights: Vec<Vec<f32>>, bias: Vec<f32>) -> LinearModel {
    let d = weights[0].len();
    LinearModel::new(
        id,
        InputShape::flat(d).unwrap(),
        vec!["absent".into(), "present".into()],
        weights,
        bias,
    )
    .unwrap()
}

/// m1: identity weights, m2: row-swapped weights, both on 2-vectors.
pub fn identity_and_swapped() -> Ensemble {
    Ensemble::new(
        vec![
            binary_model("m1", vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]),
            binary_model("m2", vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.0, 0.0]),
        ],
        PreprocessSpec::default(),
        1 << 20,
        64,
    )
    .unwrap()
}

/// One request as seen by the recording server: decoded sample values.
pub type Recorded = Vec<Vec<f32>>;

/// Stands in for the gateway: records every decoded batch and answers with a
/// well-formed response whose `echo` labels are the first value of each sample.
pub struct RecordingServer {
    pub addr: SocketAddr,
    pub log: Arc<Mutex<Vec<Recorded>>>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

async fn record(State(log): State<Arc<Mutex<Vec<Recorded>>>>, body: Bytes) -> Vec<u8> {
    let (batch, _) = decode_request(&body, 1.0).unwrap();
    let samples: Recorded = batch.samples().map(<[f32]>::to_vec).collect();
    let labels: Vec<String> = samples.iter().map(|s| format!("{}", s[0])).collect();
    log.lock().unwrap().push(samples);
    serde_json::to_vec(&serde_json::json!({
        "_batch_size": batch.batch_size(),
        "echo": labels,
    }))
    .unwrap()
}

impl RecordingServer {
    pub fn start() -> Self {
        let log = Arc::new(Mutex::new(Vec::new()));
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let app_log = log.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                let app = Router::new()
                    .route("/v1/predict", post(record))
                    .with_state(app_log);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async move {
                        let _ = stop_rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        RecordingServer {
            addr: addr_rx.recv().unwrap(),
            log,
            stop: Some(stop_tx),
            thread: Some(thread),
        }
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn batches(&self) -> Vec<Recorded> {
        self.log.lock().unwrap().clone()
    }
}

impl Drop for RecordingServer {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Writes `count` 2x2 frames; frame i has every pixel equal to `value(i)`.
pub fn write_frames(dir: &Path, count: usize, value: impl Fn(usize) -> u8) {
    for i in 0..count {
        let img = ensemblegate::pgm::Pgm::new(2, 2, vec![value(i); 4]).unwrap();
        std::fs::write(dir.join(format!("frame_{i:03}.pgm")), img.encode()).unwrap();
    }
}
