//! Load generation against `/v1/predict`, measured as client-side wall clock.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flexctl::client::{random_samples, GatewayClient};
use crate::model::InputShape;
use crate::wire::PredictionRequest;

/// The run stops early once more than this fraction of requests has failed.
pub const MAX_FAILURE_RATE: f64 = 0.10;

/// Failure-rate checks start after this many completed requests.
const MIN_REQUESTS_FOR_ABORT: usize = 10;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub batch_sizes: Vec<usize>,
    pub requests_per_size: usize,
    pub concurrency: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub index: usize,
    pub batch_size: usize,
    /// `None` when no HTTP response arrived.
    pub status: Option<u16>,
    pub latency_ms: f64,
}

impl RequestRecord {
    pub fn succeeded(&self) -> bool {
        self.status.is_some_and(|s| (200..300).contains(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub min: f64,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

impl LatencyStats {
    /// Nearest-rank percentiles; `None` for an empty sample.
    pub fn from_samples(latencies: &[f64]) -> Option<Self> {
        if latencies.is_empty() {
            return None;
        }
        let mut sorted = latencies.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = |p: f64| {
            let r = (p / 100.0 * sorted.len() as f64).ceil() as usize;
            sorted[r.clamp(1, sorted.len()) - 1]
        };
        Some(LatencyStats {
            min: sorted[0],
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p50: rank(50.0),
            p95: rank(95.0),
            max: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub batch_size: usize,
    pub requests: usize,
    pub successes: usize,
    pub latency_ms: Option<LatencyStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub requests: usize,
    pub successes: usize,
    pub failures: usize,
    pub total_samples: usize,
    pub batch_sizes: Vec<usize>,
    /// Over successful requests only.
    pub latency_ms: Option<LatencyStats>,
    pub per_size: Vec<SizeRow>,
    pub wall_clock_ms: f64,
    pub throughput_samples_per_s: f64,
    /// Keyed by HTTP status, or "connection" when no response arrived.
    pub failures_by_status: BTreeMap<String, usize>,
    pub aborted: bool,
    /// Every issued request, ordered by index.
    pub log: Vec<RequestRecord>,
}

impl LoadReport {
    pub fn from_log(
        batch_sizes: &[usize],
        mut log: Vec<RequestRecord>,
        wall_clock_ms: f64,
        aborted: bool,
    ) -> Self {
        log.sort_by_key(|r| r.index);
        let ok: Vec<&RequestRecord> = log.iter().filter(|r| r.succeeded()).collect();
        let total_samples = ok.iter().map(|r| r.batch_size).sum();
        let mut failures_by_status = BTreeMap::new();
        for r in log.iter().filter(|r| !r.succeeded()) {
            let key = r.status.map_or("connection".to_string(), |s| s.to_string());
            *failures_by_status.entry(key).or_insert(0) += 1;
        }
        let per_size = batch_sizes
            .iter()
            .map(|&b| {
                let of_size: Vec<&RequestRecord> = log.iter().filter(|r| r.batch_size == b).collect();
                let lat: Vec<f64> = of_size
                    .iter()
                    .filter(|r| r.succeeded())
                    .map(|r| r.latency_ms)
                    .collect();
                SizeRow {
                    batch_size: b,
                    requests: of_size.len(),
                    successes: lat.len(),
                    latency_ms: LatencyStats::from_samples(&lat),
                }
            })
            .collect();
        let latencies: Vec<f64> = ok.iter().map(|r| r.latency_ms).collect();
        let throughput = if wall_clock_ms > 0.0 {
            total_samples as f64 / (wall_clock_ms / 1000.0)
        } else {
            0.0
        };
        LoadReport {
            requests: log.len(),
            successes: ok.len(),
            failures: log.len() - ok.len(),
            total_samples,
            batch_sizes: batch_sizes.to_vec(),
            latency_ms: LatencyStats::from_samples(&latencies),
            per_size,
            wall_clock_ms,
            throughput_samples_per_s: throughput,
            failures_by_status,
            aborted,
            log,
        }
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>6} {:>8} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "batch", "requests", "ok", "min_ms", "mean_ms", "p50_ms", "p95_ms", "max_ms"
        );
        let row = |out: &mut String, label: String, req: usize, ok: usize, l: &Option<LatencyStats>| {
            let _ = write!(out, "{label:>6} {req:>8} {ok:>8}");
            match l {
                Some(l) => {
                    let _ = writeln!(
                        out,
                        " {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
                        l.min, l.mean, l.p50, l.p95, l.max
                    );
                }
                None => {
                    let _ = writeln!(out, " {:>9} {:>9} {:>9} {:>9} {:>9}", "-", "-", "-", "-", "-");
                }
            }
        };
        for s in &self.per_size {
            row(&mut out, s.batch_size.to_string(), s.requests, s.successes, &s.latency_ms);
        }
        row(&mut out, "all".into(), self.requests, self.successes, &self.latency_ms);
        let _ = writeln!(
            out,
            "samples {}  wall {:.1} ms  throughput {:.1} samples/s",
            self.total_samples, self.wall_clock_ms, self.throughput_samples_per_s
        );
        if self.failures > 0 {
            let parts: Vec<String> = self
                .failures_by_status
                .iter()
                .map(|(k, v)| format!("{k}: {v}"))
                .collect();
            let _ = writeln!(out, "failures {} ({})", self.failures, parts.join(", "));
        }
        if self.aborted {
            let _ = writeln!(out, "aborted: failure rate exceeded {:.0}%", MAX_FAILURE_RATE * 100.0);
        }
        out
    }
}

fn too_many_failures(failed: usize, done: usize) -> bool {
    failed as f64 > MAX_FAILURE_RATE * done as f64
}

/// Issues `requests_per_size` requests for each batch size with up to
/// `concurrency` in flight. Request payloads depend only on seed and index.
pub async fn bench_cmd(client: &GatewayClient, config: &BenchConfig) -> Result<LoadReport> {
    if config.batch_sizes.is_empty() || config.batch_sizes.contains(&0) {
        return Err(Error::InvalidArgument("batch sizes must be >= 1".into()));
    }
    if config.concurrency == 0 {
        return Err(Error::InvalidArgument("concurrency must be >= 1".into()));
    }
    let info = client.models().await?;
    let shape = InputShape::new(info.input_shape.clone())?;

    let plan: Arc<Vec<usize>> = Arc::new(
        config
            .batch_sizes
            .iter()
            .flat_map(|&b| std::iter::repeat_n(b, config.requests_per_size))
            .collect(),
    );
    let next = Arc::new(AtomicUsize::new(0));
    let done = Arc::new(AtomicUsize::new(0));
    let failed = Arc::new(AtomicUsize::new(0));
    let abort = Arc::new(AtomicBool::new(false));
    let log = Arc::new(Mutex::new(Vec::with_capacity(plan.len())));

    let started = Instant::now();
    let workers: Vec<_> = (0..config.concurrency.min(plan.len().max(1)))
        .map(|_| {
            let (client, shape, plan) = (client.clone(), shape.clone(), plan.clone());
            let (next, done, failed, abort, log) =
                (next.clone(), done.clone(), failed.clone(), abort.clone(), log.clone());
            let seed = config.seed;
            tokio::spawn(async move {
                loop {
                    if abort.load(Ordering::SeqCst) {
                        break;
                    }
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&batch_size) = plan.get(index) else {
                        break;
                    };
                    let body = PredictionRequest {
                        samples: random_samples(&shape, batch_size, seed.wrapping_add(index as u64)),
                        policy: None,
                    }
                    .to_json();
                    let t0 = Instant::now();
                    let status = client.predict_raw(body).await.ok().map(|r| r.status);
                    let record = RequestRecord {
                        index,
                        batch_size,
                        status,
                        latency_ms: t0.elapsed().as_secs_f64() * 1000.0,
                    };
                    let f = if record.succeeded() {
                        failed.load(Ordering::SeqCst)
                    } else {
                        failed.fetch_add(1, Ordering::SeqCst) + 1
                    };
                    let d = done.fetch_add(1, Ordering::SeqCst) + 1;
                    log.lock().expect("bench log lock").push(record);
                    if d >= MIN_REQUESTS_FOR_ABORT && too_many_failures(f, d) {
                        abort.store(true, Ordering::SeqCst);
                    }
                }
            })
        })
        .collect();
    for w in workers {
        w.await
            .map_err(|e| Error::Http(format!("bench worker failed: {e}")))?;
    }
    let wall_clock_ms = started.elapsed().as_secs_f64() * 1000.0;

    let log = std::mem::take(&mut *log.lock().expect("bench log lock"));
    let aborted = abort.load(Ordering::SeqCst)
        || (!log.is_empty() && too_many_failures(failed.load(Ordering::SeqCst), log.len()));
    Ok(LoadReport::from_log(&config.batch_sizes, log, wall_clock_ms, aborted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(index: usize, batch_size: usize, status: Option<u16>, latency_ms: f64) -> RequestRecord {
        RequestRecord {
            index,
            batch_size,
            status,
            latency_ms,
        }
    }

    #[test]
    fn nearest_rank_percentiles() {
        let lat: Vec<f64> = (1..=20).map(f64::from).collect();
        let s = LatencyStats::from_samples(&lat).unwrap();
        assert_eq!((s.min, s.p50, s.p95, s.max), (1.0, 10.0, 19.0, 20.0));
        assert_eq!(s.mean, 10.5);
        let one = LatencyStats::from_samples(&[3.0]).unwrap();
        assert_eq!((one.p50, one.p95), (3.0, 3.0));
        assert!(LatencyStats::from_samples(&[]).is_none());
    }

    #[test]
    fn report_accounting() {
        let log = vec![
            rec(2, 64, Some(200), 5.0),
            rec(0, 1, Some(200), 1.0),
            rec(1, 1, Some(413), 1.5),
            rec(3, 64, None, 9.0),
            rec(4, 64, Some(200), 6.0),
        ];
        let r = LoadReport::from_log(&[1, 64], log, 1000.0, false);
        assert_eq!(r.requests, 5);
        assert_eq!(r.requests, r.successes + r.failures);
        assert_eq!(r.total_samples, 1 + 64 + 64);
        assert_eq!(r.failures_by_status["413"], 1);
        assert_eq!(r.failures_by_status["connection"], 1);
        assert_eq!(r.per_size.len(), 2);
        assert_eq!((r.per_size[1].requests, r.per_size[1].successes), (3, 2));
        assert_eq!(r.throughput_samples_per_s, 129.0);
        assert!(r.log.windows(2).all(|w| w[0].index < w[1].index));
        let table = r.render_table();
        assert!(table.contains("failures 2"));

        // round-trips as JSON
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<LoadReport>(&json).unwrap(), r);
    }

    #[test]
    fn failure_threshold() {
        assert!(!too_many_failures(1, 10));
        assert!(too_many_failures(2, 10));
        assert!(!too_many_failures(0, 0));
    }
}
