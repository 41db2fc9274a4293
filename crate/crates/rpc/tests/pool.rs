use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use farmbench_core::codec::rest::rest_decode;
use farmbench_core::{genome, Genome, Protocol, RpcRequest, SearchDomain};
use farmbench_rpc::{spawn, ClientOptions, Endpoint, EvalError, RetryPolicy, RpcClient, ServerConfig, WorkerPool};
use rand::Rng;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpListener;

/// A rest slave that answers 503 to the first `fail_first` evaluate calls
/// and replies after a random delay of up to `max_delay_ms`.
struct FakeSlave {
    url: String,
    hits: Arc<AtomicUsize>,
}

async fn fake_slave(fail_first: usize, max_delay_ms: u64, status_for_bad: u16) -> FakeSlave {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&hits);
    tokio::spawn(async move {
        let domain = SearchDomain::default();
        loop {
            let Ok((mut sock, _)) = listener.accept().await else {
                return;
            };
            let counter = Arc::clone(&counter);
            tokio::spawn(async move {
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                while !buf.windows(4).any(|w| w == b"\r\n\r\n") {
                    match sock.read(&mut chunk).await {
                        Ok(0) | Err(_) => return,
                        Ok(n) => buf.extend_from_slice(&chunk[..n]),
                    }
                }
                let head = String::from_utf8_lossy(&buf).into_owned();
                let path = head.split_whitespace().nth(1).unwrap_or("/").to_string();
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let delay = if max_delay_ms > 0 {
                    rand::thread_rng().gen_range(0..=max_delay_ms)
                } else {
                    0
                };
                tokio::time::sleep(Duration::from_millis(delay)).await;
                let (status, body) = if n < fail_first {
                    (503, "busy".to_string())
                } else {
                    match rest_decode(&path) {
                        Ok(RpcRequest::Evaluate(bits)) => {
                            match Genome::from_wire_for(&bits, &domain).and_then(|g| genome::evaluate(&g, &domain)) {
                                Ok(f) => (200, f.value().to_string()),
                                Err(e) => (status_for_bad, e.to_string()),
                            }
                        }
                        _ => (404, "no route".to_string()),
                    }
                };
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: text/plain\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = sock.write_all(resp.as_bytes()).await;
                let _ = sock.shutdown().await;
            });
        }
    });
    FakeSlave { url, hits }
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        attempts: 3,
        backoff: Duration::from_millis(5),
    }
}

fn genomes(n: usize) -> Vec<Genome> {
    let domain = SearchDomain::default();
    let mut rng = rand::thread_rng();
    (0..n).map(|_| genome::random_genome(&mut rng, &domain)).collect()
}

fn local(gs: &[Genome]) -> Vec<f64> {
    let d = SearchDomain::default();
    gs.iter().map(|g| genome::evaluate(g, &d).unwrap().value()).collect()
}

#[tokio::test]
async fn transient_failures_are_retried() {
    let slave = fake_slave(2, 0, 400).await;
    let client = RpcClient::new(
        Endpoint::new(&slave.url, Protocol::Rest).unwrap(),
        ClientOptions::default(),
    )
    .unwrap();
    let g = genomes(1).remove(0);
    let f = farmbench_rpc::evaluate_with_retry(&client, &g, fast_retry())
        .await
        .unwrap();
    assert_eq!(f.value(), local(&[g])[0]);
    assert_eq!(slave.hits.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn retries_are_bounded() {
    let slave = fake_slave(usize::MAX, 0, 400).await;
    let client = RpcClient::new(
        Endpoint::new(&slave.url, Protocol::Rest).unwrap(),
        ClientOptions::default(),
    )
    .unwrap();
    let err = farmbench_rpc::evaluate_with_retry(&client, &genomes(1)[0], fast_retry())
        .await
        .unwrap_err();
    assert!(err.is_transient(), "{err}");
    assert_eq!(slave.hits.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn client_faults_are_not_retried() {
    let slave = fake_slave(0, 0, 400).await;
    let client = RpcClient::new(
        Endpoint::new(&slave.url, Protocol::Rest).unwrap(),
        ClientOptions::default(),
    )
    .unwrap();
    let err = farmbench_rpc::evaluate_with_retry(&client, &Genome::zeros(7), fast_retry())
        .await
        .unwrap_err();
    assert!(matches!(err, EvalError::Fault(ref f) if f.is_client_fault()), "{err}");
    assert_eq!(slave.hits.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn batch_keeps_positions_despite_random_delays() {
    let mut slaves = Vec::new();
    for _ in 0..3 {
        slaves.push(fake_slave(0, 20, 400).await);
    }
    let eps = slaves
        .iter()
        .map(|s| Endpoint::new(&s.url, Protocol::Rest).unwrap())
        .collect();
    let pool = WorkerPool::new(eps, ClientOptions::default())
        .unwrap()
        .with_max_in_flight(4)
        .with_retry(fast_retry());
    let gs = genomes(60);
    let got: Vec<f64> = pool
        .evaluate_batch(&gs)
        .await
        .unwrap()
        .into_iter()
        .map(|f| f.value())
        .collect();
    assert_eq!(got, local(&gs));
    for s in &slaves {
        assert_eq!(s.hits.load(Ordering::SeqCst), 20, "round-robin split");
    }
}

#[tokio::test]
async fn batch_error_names_index_and_endpoint() {
    let good = fake_slave(0, 0, 400).await;
    let pool = WorkerPool::new(
        vec![Endpoint::new(&good.url, Protocol::Rest).unwrap()],
        ClientOptions::default(),
    )
    .unwrap()
    .with_retry(fast_retry());
    let mut gs = genomes(5);
    gs[3] = Genome::zeros(3);
    let err = pool.evaluate_batch(&gs).await.unwrap_err();
    assert_eq!(err.index, 3);
    assert_eq!(err.endpoint, good.url);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn four_slaves_beat_one() {
    // Each reply is delayed ~10 ms, so throughput is bounded by parallelism.
    let mut slaves = Vec::new();
    for _ in 0..4 {
        slaves.push(fake_slave(0, 10, 400).await);
    }
    let gs = genomes(40);
    let pool_of = |n: usize| {
        let eps = slaves[..n]
            .iter()
            .map(|s| Endpoint::new(&s.url, Protocol::Rest).unwrap())
            .collect();
        WorkerPool::new(eps, ClientOptions::default()).unwrap()
    };
    let one = pool_of(1);
    let t = Instant::now();
    let a = one.evaluate_batch(&gs).await.unwrap();
    let t_one = t.elapsed();
    let four = pool_of(4);
    let t = Instant::now();
    let b = four.evaluate_batch(&gs).await.unwrap();
    let t_four = t.elapsed();
    assert_eq!(a, b);
    assert!(t_four < t_one, "4 slaves {t_four:?} vs 1 slave {t_one:?}");
}

#[tokio::test]
async fn real_servers_in_a_pool() {
    for p in Protocol::ALL {
        let servers: Vec<_> = (0..2).map(|_| spawn(ServerConfig::loopback(p)).unwrap()).collect();
        let eps = servers.iter().map(|s| Endpoint::new(&s.url(), p).unwrap()).collect();
        let pool = WorkerPool::new(eps, ClientOptions::default())
            .unwrap()
            .with_max_in_flight(3);
        let gs = genomes(25);
        let got: Vec<f64> = pool
            .evaluate_batch(&gs)
            .await
            .unwrap()
            .into_iter()
            .map(|f| f.value())
            .collect();
        assert_eq!(got, local(&gs), "{p}");
    }
}
