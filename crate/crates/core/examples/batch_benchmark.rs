//! Compare batch sizes against a local gateway and print the load report.
//!
//! cargo run --release -p ensemblegate --example batch_benchmark

use ensemblegate::flexctl::{bench_cmd, gen_model, BenchConfig, Classes, GatewayClient};
use ensemblegate::gateway::{EnsembleSource, ServeConfig, ServerHandle};
use ensemblegate::{Ensemble, Error, PreprocessSpec};

fn main() -> ensemblegate::Result<()> {
    let models = (0..4)
        .map(|i| gen_model(i, 256, Classes::Binary, &format!("m{i}")))
        .collect::<ensemblegate::Result<Vec<_>>>()?;
    let ensemble = Ensemble::new(models, PreprocessSpec::default(), 1 << 16, 64)?;
    let server = ServerHandle::spawn(ServeConfig {
        source: EnsembleSource::Loaded(ensemble.into()),
        addr: "127.0.0.1:0".parse().expect("literal address"),
        workers: 4,
    })?;

    let config = BenchConfig {
        batch_sizes: vec![1, 8, 64],
        requests_per_size: 40,
        concurrency: 4,
        seed: 0,
    };
    let client = GatewayClient::new(server.endpoint());
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Http(e.to_string()))?;
    let report = rt.block_on(bench_cmd(&client, &config))?;
    print!("{}", report.render_table());
    server.shutdown()
}
