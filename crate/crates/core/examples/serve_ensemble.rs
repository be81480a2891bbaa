//! Start the gateway on an ephemeral port, query every endpoint and shut down.
//!
//! cargo run -p ensemblegate --example serve_ensemble

use ensemblegate::flexctl::client::{random_samples, render_response};
use ensemblegate::flexctl::{gen_model, Classes, GatewayClient};
use ensemblegate::gateway::{EnsembleSource, ServeConfig, ServerHandle};
use ensemblegate::wire::PredictionRequest;
use ensemblegate::{Ensemble, InputShape, PreprocessSpec, SensitivityPolicy};

fn main() -> ensemblegate::Result<()> {
    let models = (0..3)
        .map(|i| gen_model(40 + i, 16, Classes::Binary, &format!("detector{i}")))
        .collect::<ensemblegate::Result<Vec<_>>>()?;
    let ensemble = Ensemble::new(models, PreprocessSpec::default(), 1 << 12, 32)?;
    let server = ServerHandle::spawn(ServeConfig {
        source: EnsembleSource::Loaded(ensemble.into()),
        addr: "127.0.0.1:0".parse().expect("literal address"),
        workers: 2,
    })?;
    println!("serving on {}", server.endpoint());

    let client = GatewayClient::new(server.endpoint());
    let rt = tokio::runtime::Runtime::new().map_err(|e| ensemblegate::Error::Http(e.to_string()))?;
    rt.block_on(async {
        println!("healthz: {}", client.get("/healthz").await?.text());
        let info = client.models().await?;
        println!("models: {} using {} of {} bytes", info.models.len(), info.bytes_used, info.memory_budget_bytes);

        let request = PredictionRequest {
            samples: random_samples(&InputShape::flat(16)?, 4, 7),
            policy: Some(SensitivityPolicy::AtLeast(2).into()),
        };
        println!("{}", render_response(&client.predict(&request).await?));

        let oversize = PredictionRequest {
            samples: random_samples(&InputShape::flat(16)?, 33, 7),
            policy: None,
        };
        let reply = client.predict_raw(oversize.to_json()).await?;
        println!("oversize batch: {} {}", reply.status, reply.text());
        Ok::<_, ensemblegate::Error>(())
    })?;

    server.shutdown()
}
