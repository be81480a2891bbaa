//! Companion tooling: fixture generation plus predict, track and bench clients.

pub mod bench;
pub mod client;
pub mod fixtures;
pub mod track;

pub use bench::{bench_cmd, BenchConfig, LoadReport};
pub use client::{predict_cmd, GatewayClient, SampleSource};
pub use fixtures::{gen_manifest, gen_model, Classes, SplitMix64};
pub use track::{track_cmd, WindowResult};
