//! Write a short sequence of PGM frames and send them in chronological windows.
//!
//! cargo run -p ensemblegate --example chronological_tracking

use ensemblegate::flexctl::track::render_timeline;
use ensemblegate::flexctl::{track_cmd, GatewayClient};
use ensemblegate::gateway::{EnsembleSource, ServeConfig, ServerHandle};
use ensemblegate::pgm::Pgm;
use ensemblegate::{Ensemble, Error, InputShape, LinearModel, PreprocessSpec, SensitivityPolicy};

fn brightness_model(id: &str, threshold: f32) -> ensemblegate::Result<LinearModel> {
    // "present" once the mean pixel value exceeds `threshold`
    LinearModel::new(
        id,
        InputShape::image(1, 4, 4)?,
        vec!["absent".into(), "present".into()],
        vec![vec![0.0; 16], vec![1.0 / 16.0; 16]],
        vec![threshold, 0.0],
    )
}

fn main() -> ensemblegate::Result<()> {
    let ensemble = Ensemble::new(
        vec![brightness_model("dim", 0.3)?, brightness_model("bright", 0.7)?],
        PreprocessSpec::default(),
        1 << 12,
        8,
    )?;
    let server = ServerHandle::spawn(ServeConfig {
        source: EnsembleSource::Loaded(ensemble.into()),
        addr: "127.0.0.1:0".parse().expect("literal address"),
        workers: 1,
    })?;

    // an object fades in then out
    let dir = tempfile::tempdir().map_err(|e| Error::io("tempdir", e))?;
    for (i, level) in [0u8, 60, 120, 200, 250, 200, 120, 60].into_iter().enumerate() {
        let frame = Pgm::new(4, 4, vec![level; 16])?;
        let path = dir.path().join(format!("t{i:02}.pgm"));
        std::fs::write(&path, frame.encode()).map_err(|e| Error::io(&path, e))?;
    }

    let client = GatewayClient::new(server.endpoint());
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Http(e.to_string()))?;
    for policy in [SensitivityPolicy::Any, SensitivityPolicy::All] {
        let results = rt.block_on(track_cmd(&client, dir.path(), 3, Some(policy)))?;
        println!("policy {policy}");
        print!("{}", render_timeline(&results));
    }
    server.shutdown()
}
