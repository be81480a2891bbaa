use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ensemblegate::flexctl::{self, fixtures, track, Classes, GatewayClient, SampleSource};
use ensemblegate::gateway::{self, EnsembleSource, ServeConfig};
use ensemblegate::{Error, PreprocessSpec, Result, SensitivityPolicy};

#[derive(Parser)]
#[command(name = "flexctl", version, about = "Ensemble inference gateway and companion tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a manifest and serve it over HTTP.
    Serve {
        #[arg(long, env = "ENSEMBLEGATE_MANIFEST")]
        manifest: PathBuf,
        #[arg(long, env = "ENSEMBLEGATE_PORT", default_value_t = 8080)]
        port: u16,
        /// Concurrent request handlers; defaults to the number of logical cores.
        #[arg(long, env = "ENSEMBLEGATE_WORKERS")]
        workers: Option<usize>,
        #[arg(long, default_value = "0.0.0.0")]
        host: IpAddr,
    },
    /// Write a deterministic LIN1 model.
    GenModel {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        dim: usize,
        #[arg(long, conflicts_with = "binary", required_unless_present = "binary")]
        classes: Option<usize>,
        #[arg(long)]
        binary: bool,
        #[arg(long)]
        id: String,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
    /// Write a manifest listing existing model files.
    GenManifest {
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        budget: u64,
        #[arg(long)]
        max_batch: usize,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        mean: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        std: Vec<f64>,
        #[arg(long, default_value_t = 255.0)]
        pixel_scale: f64,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
    /// Send one batch and print the response.
    Predict {
        #[arg(long)]
        endpoint: String,
        /// Random f32 samples in [-1, 1).
        #[arg(long, conflicts_with = "files")]
        batch: Option<usize>,
        #[arg(long, num_args = 1..)]
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Send a directory of frames in chronological windows.
    Track {
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        window: usize,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Measure latency and throughput across batch sizes.
    Bench {
        #[arg(long)]
        endpoint: String,
        #[arg(long, value_delimiter = ',', default_value = "1,8,64")]
        batch_sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        requests: usize,
        #[arg(long, default_value_t = 1)]
        concurrency: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Any,
    All,
    AtLeast,
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long, value_enum)]
    policy: Option<PolicyKind>,
    #[arg(long, requires = "policy")]
    k: Option<usize>,
}

impl PolicyArgs {
    fn resolve(&self) -> Result<Option<SensitivityPolicy>> {
        Ok(match self.policy {
            None => None,
            Some(PolicyKind::Any) => Some(SensitivityPolicy::Any),
            Some(PolicyKind::All) => Some(SensitivityPolicy::All),
            Some(PolicyKind::AtLeast) => Some(SensitivityPolicy::AtLeast(self.k.ok_or_else(
                || Error::InvalidArgument("--policy at-least needs --k".into()),
            )?)),
        })
    }
}

fn client_runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Http(e.to_string()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Serve {
            manifest,
            port,
            workers,
            host,
        } => {
            let workers = workers
                .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
                .unwrap_or(1);
            let config = ServeConfig {
                source: EnsembleSource::Manifest(manifest),
                addr: SocketAddr::new(host, port),
                workers,
            };
            gateway::run(config, gateway::shutdown_signal(), |addr, ensemble| {
                eprintln!(
                    "listening on http://{addr} with {workers} workers, {} models, {} / {} bytes",
                    ensemble.len(),
                    ensemble.bytes_used(),
                    ensemble.memory_budget_bytes()
                );
            })
        }
        Command::GenModel {
            seed,
            dim,
            classes,
            binary,
            id,
            output,
        } => {
            let classes = if binary {
                Classes::Binary
            } else {
                Classes::Count(classes.unwrap_or(0))
            };
            let model = flexctl::gen_model(seed, dim, classes, &id)?;
            fixtures::write_model(&model, &output)
        }
        Command::GenManifest {
            models,
            budget,
            max_batch,
            mean,
            std,
            pixel_scale,
            output,
        } => {
            let spec = PreprocessSpec::new(mean, std, pixel_scale)?;
            let manifest = flexctl::gen_manifest(&models, budget, max_batch, spec, &output)?;
            fixtures::write_manifest(&manifest, &output)
        }
        Command::Predict {
            endpoint,
            batch,
            files,
            seed,
            policy,
        } => {
            let source = if files.is_empty() {
                SampleSource::Random {
                    batch: batch.unwrap_or(1),
                    seed,
                }
            } else {
                SampleSource::Files(files)
            };
            let policy = policy.resolve()?;
            let client = GatewayClient::new(endpoint);
            let resp = client_runtime()?.block_on(flexctl::predict_cmd(&client, &source, policy))?;
            println!("{}", flexctl::client::render_response(&resp));
            Ok(())
        }
        Command::Track {
            endpoint,
            frames,
            window,
            policy,
        } => {
            let policy = policy.resolve()?;
            let client = GatewayClient::new(endpoint);
            let results =
                client_runtime()?.block_on(flexctl::track_cmd(&client, &frames, window, policy))?;
            print!("{}", track::render_timeline(&results));
            Ok(())
        }
        Command::Bench {
            endpoint,
            batch_sizes,
            requests,
            concurrency,
            seed,
            json,
        } => {
            let config = flexctl::BenchConfig {
                batch_sizes,
                requests_per_size: requests,
                concurrency,
                seed,
            };
            let client = GatewayClient::new(endpoint);
            let report = client_runtime()?.block_on(flexctl::bench_cmd(&client, &config))?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                );
            } else {
                print!("{}", report.render_table());
            }
            if report.aborted {
                return Err(Error::Http(format!(
                    "aborted after {} of {} requests failed",
                    report.failures, report.requests
                )));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
