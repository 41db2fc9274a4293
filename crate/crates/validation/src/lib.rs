//! Helpers shared by the acceptance suite in `tests/acceptance.rs`.

use std::io::Write;
use std::sync::{Mutex, MutexGuard};

use farmbench::harness::{self, RemoteOptions};
use farmbench_core::ga::{GaConfig, GaResult};
use farmbench_core::Protocol;
use farmbench_rpc::{spawn, ClientOptions, Endpoint, RpcClient, ServerConfig, ServerHandle};

static SERIAL: Mutex<()> = Mutex::new(());

/// Held for the whole of each check so timings never overlap other work.
pub fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|p| p.into_inner())
}

/// Prints a `PASS`/`FAIL` line straight to stderr, which the test harness
/// does not capture.
pub fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let word = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[acceptance] {word} #{id} {name}: {detail}");
}

pub fn server(p: Protocol) -> ServerHandle {
    spawn(ServerConfig::loopback(p)).expect("loopback server")
}

pub fn client(s: &ServerHandle) -> RpcClient {
    RpcClient::new(Endpoint::new(&s.url(), s.protocol()).unwrap(), ClientOptions::default()).unwrap()
}

pub fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .unwrap()
}

/// `repeats` seeded GA runs evaluated by the server behind `s`.
pub fn remote_runs(s: &ServerHandle, cfg: &GaConfig, repeats: usize) -> Vec<GaResult> {
    let mut ev = harness::remote_evaluator(s.protocol(), &[s.url()], RemoteOptions::default()).unwrap();
    harness::run_ga_repeats(cfg, repeats, &mut ev).expect("GA runs")
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
