//! Clients for the slave service, up to a worker pool that farms a batch of
//! genomes out to several endpoints.

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use futures::future::try_join_all;
use reqwest::header::CONTENT_TYPE;
use thiserror::Error;
use tokio::sync::Semaphore;

use farmbench_core::codec::{envelope, rest};
use farmbench_core::ga::Evaluator;
use farmbench_core::{Fault, Fitness, Genome, Protocol, RpcRequest, RpcResponse};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EndpointError {
    #[error("endpoint URL {0:?} must start with http://")]
    Scheme(String),
    #[error("endpoint URL {0:?} has no host")]
    NoHost(String),
}

/// A slave or echo server address plus the protocol it speaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    base: String,
    protocol: Protocol,
}

impl Endpoint {
    pub fn new(url: &str, protocol: Protocol) -> Result<Self, EndpointError> {
        let rest = url
            .strip_prefix("http://")
            .ok_or_else(|| EndpointError::Scheme(url.to_string()))?;
        let host = rest.trim_end_matches('/');
        if host.is_empty() || host.contains('/') {
            return Err(EndpointError::NoHost(url.to_string()));
        }
        Ok(Self {
            base: format!("http://{host}"),
            protocol,
        })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.base, self.protocol)
    }
}

#[derive(Debug, Error)]
pub enum CallError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("unexpected HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unparseable reply: {0}")]
    Protocol(String),
}

impl CallError {
    /// Connection-level failures and 5xx responses may succeed on retry.
    pub fn is_transient(&self) -> bool {
        match self {
            CallError::Transport(_) => true,
            CallError::Status { status, .. } => *status >= 500,
            CallError::Protocol(_) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientOptions {
    pub keep_alive: bool,
    pub timeout: Duration,
}

impl Default for ClientOptions {
    fn default() -> Self {
        Self {
            keep_alive: true,
            timeout: Duration::from_secs(30),
        }
    }
}

/// Speaks one protocol to one endpoint over a (by default) persistent
/// HTTP/1.1 connection.
#[derive(Debug, Clone)]
pub struct RpcClient {
    http: reqwest::Client,
    endpoint: Endpoint,
}

impl RpcClient {
    pub fn new(endpoint: Endpoint, opts: ClientOptions) -> Result<Self, CallError> {
        let mut b = reqwest::Client::builder()
            .timeout(opts.timeout)
            .tcp_nodelay(true)
            .no_proxy()
            .http1_only();
        if !opts.keep_alive {
            b = b.pool_max_idle_per_host(0);
        }
        Ok(Self {
            http: b.build()?,
            endpoint,
        })
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    /// Sends one request and returns the logical response. Faults are
    /// `Ok(RpcResponse::Fault)`; only transport and framing problems are
    /// errors.
    pub async fn call(&self, req: &RpcRequest) -> Result<RpcResponse, CallError> {
        match self.endpoint.protocol {
            Protocol::Envelope => {
                let body = envelope::encode_envelope_request(req);
                let resp = self
                    .http
                    .post(format!("{}/", self.endpoint.base))
                    .header(CONTENT_TYPE, "text/xml; charset=utf-8")
                    .header("SOAPAction", format!("\"urn:Demo#{}\"", req.method()))
                    .body(body)
                    .send()
                    .await?;
                let status = resp.status().as_u16();
                let bytes = resp.bytes().await?;
                // SOAP 1.1 carries faults with status 500; anything else
                // outside 2xx is not an envelope reply.
                if !(200..300).contains(&status) && status != 500 {
                    return Err(CallError::Status {
                        status,
                        body: String::from_utf8_lossy(&bytes).into_owned(),
                    });
                }
                let parsed =
                    envelope::parse_envelope_response(&bytes).map_err(|f| CallError::Protocol(f.to_string()))?;
                if let Some(m) = parsed.method {
                    if m != req.method() {
                        return Err(CallError::Protocol(format!(
                            "asked for {} but got a {m} response",
                            req.method()
                        )));
                    }
                }
                Ok(parsed.response)
            }
            Protocol::Rest => {
                let resp = self
                    .http
                    .get(format!("{}{}", self.endpoint.base, rest::rest_encode(req)))
                    .send()
                    .await?;
                let status = resp.status().as_u16();
                let body = resp.text().await?;
                if status == 404 || status == 405 {
                    return Err(CallError::Status { status, body });
                }
                Ok(rest::decode_rest_response(status, body))
            }
        }
    }

    /// One push of `payload` followed by one pop; returns the popped string.
    pub async fn echo_roundtrip(&self, payload: &str) -> Result<String, EchoError> {
        let pushed = self
            .call(&RpcRequest::Push(payload.to_string()))
            .await
            .map_err(|e| EchoError::call(Phase::Push, e))?;
        match pushed {
            RpcResponse::Result(ok) if ok == "ok" => {}
            other => return Err(EchoError::reply(Phase::Push, other)),
        }
        match self
            .call(&RpcRequest::Pop)
            .await
            .map_err(|e| EchoError::call(Phase::Pop, e))?
        {
            RpcResponse::Result(s) => Ok(s),
            other => Err(EchoError::reply(Phase::Pop, other)),
        }
    }

    /// Asks the slave for the fitness of `g`.
    pub async fn remote_evaluate(&self, g: &Genome) -> Result<Fitness, EvalError> {
        match self.call(&RpcRequest::Evaluate(g.to_wire())).await? {
            RpcResponse::Result(text) => text
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Fitness)
                .ok_or_else(|| EvalError::NotANumber(text)),
            RpcResponse::Fault(f) => Err(EvalError::Fault(f)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Push,
    Pop,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Push => "push",
            Phase::Pop => "pop",
        })
    }
}

#[derive(Debug, Error)]
#[error("echo round-trip failed during {phase}: {reason}")]
pub struct EchoError {
    pub phase: Phase,
    pub reason: String,
    #[source]
    pub source: Option<CallError>,
}

impl EchoError {
    fn call(phase: Phase, e: CallError) -> Self {
        Self {
            phase,
            reason: e.to_string(),
            source: Some(e),
        }
    }

    fn reply(phase: Phase, resp: RpcResponse) -> Self {
        let reason = match resp {
            RpcResponse::Result(s) => format!("unexpected reply {s:?}"),
            RpcResponse::Fault(f) => format!("fault {f}"),
        };
        Self {
            phase,
            reason,
            source: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Call(#[from] CallError),
    #[error("slave fault {0}")]
    Fault(Fault),
    #[error("slave returned non-numeric fitness {0:?}")]
    NotANumber(String),
}

impl EvalError {
    pub fn is_transient(&self) -> bool {
        match self {
            EvalError::Call(e) => e.is_transient(),
            EvalError::Fault(f) => !f.is_client_fault(),
            EvalError::NotANumber(_) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Sleep before retry `k` (1-based) is `backoff * k`.
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            backoff: Duration::from_millis(100),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            attempts: 1,
            backoff: Duration::ZERO,
        }
    }
}

/// `remote_evaluate` with retries for transient failures. Evaluation is
/// stateless, so a retry cannot change the answer.
pub async fn evaluate_with_retry(client: &RpcClient, g: &Genome, policy: RetryPolicy) -> Result<Fitness, EvalError> {
    let attempts = policy.attempts.max(1);
    let mut attempt = 1;
    loop {
        match client.remote_evaluate(g).await {
            Ok(f) => return Ok(f),
            Err(e) if e.is_transient() && attempt < attempts => {
                log::debug!("evaluate attempt {attempt} on {} failed: {e}", client.endpoint());
                tokio::time::sleep(policy.backoff * attempt).await;
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

#[derive(Debug, Error)]
#[error("genome {index} failed on {endpoint}: {source}")]
pub struct BatchError {
    pub index: usize,
    pub endpoint: String,
    #[source]
    pub source: EvalError,
}

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("worker pool needs at least one endpoint")]
    NoEndpoints,
    #[error("worker pool mixes protocols ({0} and {1})")]
    MixedProtocols(Protocol, Protocol),
    #[error(transparent)]
    Client(#[from] CallError),
}

/// Slave endpoints sharing one protocol. Genome `i` of a batch goes to
/// endpoint `i mod n`; each endpoint has at most `max_in_flight` requests
/// outstanding.
#[derive(Debug)]
pub struct WorkerPool {
    clients: Vec<RpcClient>,
    limits: Vec<Arc<Semaphore>>,
    max_in_flight: usize,
    retry: RetryPolicy,
}

impl WorkerPool {
    pub fn new(endpoints: Vec<Endpoint>, opts: ClientOptions) -> Result<Self, PoolError> {
        let first = endpoints.first().ok_or(PoolError::NoEndpoints)?.protocol();
        if let Some(other) = endpoints.iter().find(|e| e.protocol() != first) {
            return Err(PoolError::MixedProtocols(first, other.protocol()));
        }
        let clients = endpoints
            .into_iter()
            .map(|e| RpcClient::new(e, opts))
            .collect::<Result<Vec<_>, _>>()?;
        let mut pool = Self {
            limits: Vec::new(),
            clients,
            max_in_flight: 1,
            retry: RetryPolicy::default(),
        };
        pool.set_max_in_flight(1);
        Ok(pool)
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.set_max_in_flight(n);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn set_max_in_flight(&mut self, n: usize) {
        self.max_in_flight = n.max(1);
        self.limits = self
            .clients
            .iter()
            .map(|_| Arc::new(Semaphore::new(self.max_in_flight)))
            .collect();
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    pub fn endpoints(&self) -> impl Iterator<Item = &Endpoint> {
        self.clients.iter().map(RpcClient::endpoint)
    }

    /// Evaluates every genome remotely; output `i` is the fitness of input
    /// `i` whatever order the replies arrive in.
    pub async fn evaluate_batch(&self, genomes: &[Genome]) -> Result<Vec<Fitness>, BatchError> {
        let n = self.clients.len();
        let jobs = genomes.iter().enumerate().map(|(index, g)| {
            let client = &self.clients[index % n];
            let limit = &self.limits[index % n];
            async move {
                let _slot = limit.acquire().await.expect("semaphore is never closed");
                evaluate_with_retry(client, g, self.retry)
                    .await
                    .map_err(|source| BatchError {
                        index,
                        endpoint: client.endpoint().base().to_string(),
                        source,
                    })
            }
        });
        try_join_all(jobs).await
    }
}

/// Blocking [`Evaluator`] over a [`WorkerPool`], for driving the GA loop.
pub struct RemoteEvaluator {
    rt: tokio::runtime::Runtime,
    pool: WorkerPool,
}

impl RemoteEvaluator {
    pub fn new(pool: WorkerPool) -> std::io::Result<Self> {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
        Ok(Self { rt, pool })
    }

    pub fn pool(&self) -> &WorkerPool {
        &self.pool
    }
}

impl Evaluator for RemoteEvaluator {
    type Error = BatchError;

    fn evaluate(&mut self, genomes: &[Genome]) -> Result<Vec<Fitness>, BatchError> {
        self.rt.block_on(self.pool.evaluate_batch(genomes))
    }
}
