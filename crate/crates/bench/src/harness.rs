//! Experiment runners: timed echo loops and repeated seeded GA runs, and
//! the glue that turns their samples into [`BenchReport`]s.

use std::time::{Duration, Instant};

use thiserror::Error;

use farmbench_core::ga::{run_ga, Evaluator, GaConfig, GaError, GaResult};
use farmbench_core::report::ReportError;
use farmbench_core::stats::StatsError;
use farmbench_core::{BenchReport, Environment, Experiment, Protocol, TrialStats, Workload};
use farmbench_rpc::{
    ClientOptions, EchoError, Endpoint, EndpointError, PoolError, RemoteEvaluator, RpcClient, WorkerPool,
};

/// Untimed round-trips before each echo trial.
pub const WARMUP_ROUNDTRIPS: usize = 5;

const PAYLOAD_DIGITS: &[u8] = b"01234567890";

#[derive(Debug, Error)]
pub enum TrialFailure {
    #[error(transparent)]
    Echo(#[from] EchoError),
    #[error("iteration {iteration}: sent {sent} bytes, got back {got} bytes that differ")]
    Mismatch { iteration: usize, sent: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("statistics: {0}")]
    Stats(#[from] StatsError),
    #[error("echo trial {trial} failed twice: {source}")]
    TrialFailed {
        trial: usize,
        #[source]
        source: TrialFailure,
    },
    #[error("GA run with seed {seed} failed after {} completed runs: {source}", completed.len())]
    GaAborted {
        seed: u64,
        completed: Vec<GaResult>,
        #[source]
        source: GaError,
    },
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("cannot start client runtime: {0}")]
    Runtime(#[from] std::io::Error),
    #[error(transparent)]
    Report(#[from] ReportError),
}

/// The digit string `01234567890` repeated and cut to `len` bytes.
pub fn echo_payload(len: usize) -> String {
    PAYLOAD_DIGITS.iter().cycle().take(len).map(|&b| b as char).collect()
}

async fn timed_trial(client: &RpcClient, payload: &str, iterations: usize) -> Result<Duration, TrialFailure> {
    for _ in 0..WARMUP_ROUNDTRIPS {
        client.echo_roundtrip(payload).await?;
    }
    let start = Instant::now();
    for iteration in 0..iterations {
        let got = client.echo_roundtrip(payload).await?;
        if got.as_bytes() != payload.as_bytes() {
            return Err(TrialFailure::Mismatch {
                iteration,
                sent: payload.len(),
                got: got.len(),
            });
        }
    }
    Ok(start.elapsed())
}

/// Times `trials` loops of `iterations` push/pop round-trips each and
/// returns statistics over the per-trial loop time in seconds. A failed
/// trial is re-run once; a second failure aborts the experiment.
pub async fn run_echo_experiment(
    client: &RpcClient,
    payload_len: usize,
    iterations: usize,
    trials: usize,
) -> Result<TrialStats, HarnessError> {
    let mut stats = run_echo_interleaved(std::slice::from_ref(client), payload_len, iterations, trials).await?;
    Ok(stats.remove(0))
}

/// [`run_echo_experiment`] for several servers at once. Trial `k` runs once
/// against every client in turn, starting from a different client each
/// trial, so slow drift on the host lands on all of them alike. Trials
/// never overlap.
pub async fn run_echo_interleaved(
    clients: &[RpcClient],
    payload_len: usize,
    iterations: usize,
    trials: usize,
) -> Result<Vec<TrialStats>, HarnessError> {
    if iterations == 0 || trials == 0 || clients.is_empty() {
        return Err(StatsError::TooFewSamples(0).into());
    }
    let payload = echo_payload(payload_len);
    let mut samples = vec![Vec::with_capacity(trials); clients.len()];
    for trial in 0..trials {
        for k in 0..clients.len() {
            let idx = (trial + k) % clients.len();
            let client = &clients[idx];
            let elapsed = match timed_trial(client, &payload, iterations).await {
                Ok(d) => d,
                Err(first) => {
                    log::warn!(
                        "echo trial {trial} on {} failed, re-running once: {first}",
                        client.endpoint()
                    );
                    timed_trial(client, &payload, iterations)
                        .await
                        .map_err(|source| HarnessError::TrialFailed { trial, source })?
                }
            };
            samples[idx].push(elapsed.as_secs_f64());
        }
    }
    samples
        .iter()
        .map(|s| TrialStats::from_samples(s).map_err(HarnessError::from))
        .collect()
}

/// Runs the GA `repeats` times with seeds `cfg.seed`, `cfg.seed + 1`, ...
/// against one evaluator. On failure the completed runs travel with the
/// error.
pub fn run_ga_repeats<E: Evaluator>(
    cfg: &GaConfig,
    repeats: usize,
    evaluator: &mut E,
) -> Result<Vec<GaResult>, HarnessError> {
    if repeats == 0 {
        return Err(StatsError::TooFewSamples(0).into());
    }
    let mut completed = Vec::with_capacity(repeats);
    for k in 0..repeats as u64 {
        let seed = cfg.seed.wrapping_add(k);
        let run_cfg = cfg.clone().with_seed(seed);
        match run_ga(&run_cfg, &mut *evaluator) {
            Ok(r) => completed.push(r),
            Err(source) => {
                return Err(HarnessError::GaAborted {
                    seed,
                    completed,
                    source,
                })
            }
        }
    }
    Ok(completed)
}

/// Options for the remote side of a GA experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemoteOptions {
    pub client: ClientOptions,
    pub max_in_flight: usize,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        Self {
            client: ClientOptions::default(),
            max_in_flight: 1,
        }
    }
}

pub fn remote_evaluator(
    protocol: Protocol,
    targets: &[String],
    opts: RemoteOptions,
) -> Result<RemoteEvaluator, HarnessError> {
    let endpoints = targets
        .iter()
        .map(|t| Endpoint::new(t, protocol))
        .collect::<Result<Vec<_>, _>>()?;
    let pool = WorkerPool::new(endpoints, opts.client)?.with_max_in_flight(opts.max_in_flight);
    Ok(RemoteEvaluator::new(pool)?)
}

/// Repeated GA runs farmed out to `targets`, summarised as a report. The
/// individual runs are returned alongside for callers that need them.
pub fn run_ga_experiment(
    protocol: Protocol,
    targets: &[String],
    cfg: &GaConfig,
    repeats: usize,
    opts: RemoteOptions,
) -> Result<(BenchReport, Vec<GaResult>), HarnessError> {
    let mut evaluator = remote_evaluator(protocol, targets, opts)?;
    let results = run_ga_repeats(cfg, repeats, &mut evaluator)?;
    Ok((ga_report(protocol, cfg, &results)?, results))
}

/// Host name and an RFC 3339 timestamp for the report footer.
pub fn environment_note() -> Environment {
    let host = std::env::var("HOSTNAME")
        .ok()
        .or_else(|| std::fs::read_to_string("/etc/hostname").ok())
        .map(|h| h.trim().to_string())
        .filter(|h| !h.is_empty())
        .unwrap_or_else(|| "unknown".to_string());
    Environment {
        host,
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    }
}

pub fn echo_report(protocol: Protocol, payload_len: usize, iterations: usize, stats: TrialStats) -> BenchReport {
    BenchReport {
        experiment: Experiment::Echo,
        protocol,
        workload: Workload::Echo {
            payload_len,
            iterations,
        },
        time_stats: stats,
        accuracy_stats: None,
        environment: environment_note(),
    }
}

pub fn ga_report(protocol: Protocol, cfg: &GaConfig, results: &[GaResult]) -> Result<BenchReport, HarnessError> {
    let times: Vec<f64> = results.iter().map(|r| r.wall_time.as_secs_f64()).collect();
    let accs: Vec<f64> = results.iter().map(|r| r.best_accuracy).collect();
    Ok(BenchReport {
        experiment: Experiment::Ga,
        protocol,
        workload: Workload::Ga {
            generations: cfg.generations,
            population: cfg.population_size,
        },
        time_stats: TrialStats::from_samples(&times)?,
        accuracy_stats: Some(TrialStats::from_samples(&accs)?),
        environment: environment_note(),
    })
}
