//! HTTP host for the Demo service under either wire protocol.
//!
//! One server instance speaks exactly one protocol:
//!
//! * envelope: `POST /` with an XML envelope body, answered with an
//!   envelope (`text/xml`). Faults travel as `soap:Fault` with status 500.
//! * rest: `GET /push/{cad}`, `GET /pop/`, `GET /evaluate/{bits}`, answered
//!   with a bare `text/plain` body. Faults map to 400/500 with the detail
//!   as body; unknown routes get 404.

use std::convert::Infallible;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use bytes::Bytes;
use http_body_util::{BodyExt, Full, Limited};
use hyper::body::Incoming;
use hyper::header::{HeaderValue, CONTENT_TYPE};
use hyper::server::conn::http1;
use hyper::service::service_fn;
use hyper::{Method as HttpMethod, Request, Response, StatusCode};
use hyper_util::rt::TokioIo;
use hyper_util::server::graceful::GracefulShutdown;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{oneshot, Semaphore};

use farmbench_core::codec::{self, envelope, rest, RestError};
use farmbench_core::{genome, Fault, Genome, Protocol, RpcRequest, RpcResponse, SearchDomain};

const MAX_BODY_BYTES: usize = 4 << 20;
const DRAIN_TIMEOUT: Duration = Duration::from_secs(10);
const XML_CONTENT_TYPE: &str = "text/xml; charset=utf-8";
const TEXT_CONTENT_TYPE: &str = "text/plain; charset=utf-8";

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server runtime failed: {0}")]
    Runtime(#[source] std::io::Error),
    #[error("server thread panicked")]
    Panicked,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub protocol: Protocol,
    pub domain: SearchDomain,
    /// Requests handled at once; further requests wait for a slot.
    pub concurrency: usize,
    pub keep_alive: bool,
}

impl ServerConfig {
    /// Loopback on an ephemeral port with default domain and limits.
    pub fn loopback(protocol: Protocol) -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], 0)),
            protocol,
            domain: SearchDomain::default(),
            concurrency: 64,
            keep_alive: true,
        }
    }

    pub fn with_domain(mut self, domain: SearchDomain) -> Self {
        self.domain = domain;
        self
    }
}

/// Handlers behind both protocols: the single-slot echo store and the
/// fitness evaluator.
#[derive(Debug)]
pub struct DemoService {
    slot: Mutex<String>,
    domain: SearchDomain,
}

impl DemoService {
    pub fn new(domain: SearchDomain) -> Self {
        Self {
            slot: Mutex::new(String::new()),
            domain,
        }
    }

    pub fn domain(&self) -> &SearchDomain {
        &self.domain
    }

    pub fn handle_push(&self, cad: String) -> &'static str {
        *self.slot.lock().unwrap_or_else(|p| p.into_inner()) = cad;
        "ok"
    }

    /// Returns the stored string and empties the slot.
    pub fn handle_pop(&self) -> String {
        std::mem::take(&mut *self.slot.lock().unwrap_or_else(|p| p.into_inner()))
    }

    /// Current slot contents without resetting it.
    pub fn peek(&self) -> String {
        self.slot.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    /// Fitness of a wire-form genome as shortest round-trip decimal text.
    pub fn handle_evaluate(&self, genome_str: &str) -> Result<String, Fault> {
        let g = Genome::from_wire_for(genome_str, &self.domain).map_err(|e| Fault::client(e.to_string()))?;
        let f = genome::evaluate(&g, &self.domain).map_err(|e| Fault::client(e.to_string()))?;
        Ok(f.value().to_string())
    }

    pub fn dispatch(&self, req: RpcRequest) -> RpcResponse {
        match req {
            RpcRequest::Push(cad) => RpcResponse::ok(self.handle_push(cad)),
            RpcRequest::Pop => RpcResponse::ok(self.handle_pop()),
            RpcRequest::Evaluate(g) => self.handle_evaluate(&g).into(),
        }
    }
}

struct Context {
    protocol: Protocol,
    service: DemoService,
    limit: Semaphore,
    keep_alive: bool,
}

fn reply(status: StatusCode, content_type: &'static str, body: impl Into<Bytes>) -> Response<Full<Bytes>> {
    let mut resp = Response::new(Full::new(body.into()));
    *resp.status_mut() = status;
    resp.headers_mut()
        .insert(CONTENT_TYPE, HeaderValue::from_static(content_type));
    resp
}

async fn handle(req: Request<Incoming>, ctx: Arc<Context>) -> Result<Response<Full<Bytes>>, Infallible> {
    let _permit = ctx.limit.acquire().await.expect("semaphore is never closed");
    let mut resp = match ctx.protocol {
        Protocol::Envelope => envelope_route(req, &ctx.service).await,
        Protocol::Rest => rest_route(req, &ctx.service),
    };
    if !ctx.keep_alive {
        resp.headers_mut()
            .insert(hyper::header::CONNECTION, HeaderValue::from_static("close"));
    }
    Ok(resp)
}

async fn envelope_route(req: Request<Incoming>, service: &DemoService) -> Response<Full<Bytes>> {
    if req.uri().path() != "/" {
        return reply(StatusCode::NOT_FOUND, TEXT_CONTENT_TYPE, "not found");
    }
    if req.method() != HttpMethod::POST {
        return reply(StatusCode::METHOD_NOT_ALLOWED, TEXT_CONTENT_TYPE, "use POST");
    }
    let body = match Limited::new(req.into_body(), MAX_BODY_BYTES).collect().await {
        Ok(b) => b.to_bytes(),
        Err(e) => return reply(StatusCode::PAYLOAD_TOO_LARGE, TEXT_CONTENT_TYPE, e.to_string()),
    };
    let (method, response) = match envelope::parse_envelope_request(&body) {
        Ok(call) => {
            let method = call.method();
            (method, service.dispatch(call))
        }
        // Unparseable calls have no method; the fault body does not name one.
        Err(fault) => (codec::Method::Pop, RpcResponse::Fault(fault)),
    };
    let status = match response {
        RpcResponse::Result(_) => StatusCode::OK,
        RpcResponse::Fault(_) => StatusCode::INTERNAL_SERVER_ERROR,
    };
    reply(
        status,
        XML_CONTENT_TYPE,
        envelope::encode_envelope_response(method, &response),
    )
}

fn rest_route(req: Request<Incoming>, service: &DemoService) -> Response<Full<Bytes>> {
    if req.method() != HttpMethod::GET {
        return reply(StatusCode::METHOD_NOT_ALLOWED, TEXT_CONTENT_TYPE, "use GET");
    }
    let call = match rest::rest_decode(req.uri().path()) {
        Ok(call) => call,
        Err(e @ RestError::UnknownRoute(_)) => return reply(StatusCode::NOT_FOUND, TEXT_CONTENT_TYPE, e.to_string()),
        Err(e) => return reply(StatusCode::BAD_REQUEST, TEXT_CONTENT_TYPE, e.to_string()),
    };
    let (status, body) = rest::encode_rest_response(&service.dispatch(call));
    let status = StatusCode::from_u16(status).expect("rest codec emits valid status codes");
    reply(status, TEXT_CONTENT_TYPE, body)
}

/// Accepts connections on `listener` until `shutdown` resolves, then stops
/// accepting and waits for in-flight connections to finish.
pub async fn serve_on<F>(listener: TcpListener, cfg: ServerConfig, shutdown: F) -> Result<(), ServerError>
where
    F: Future<Output = ()>,
{
    let ctx = Arc::new(Context {
        protocol: cfg.protocol,
        service: DemoService::new(cfg.domain),
        limit: Semaphore::new(cfg.concurrency.max(1)),
        keep_alive: cfg.keep_alive,
    });
    let graceful = GracefulShutdown::new();
    tokio::pin!(shutdown);

    loop {
        tokio::select! {
            accepted = listener.accept() => {
                let stream = match accepted {
                    Ok((stream, _)) => stream,
                    Err(e) => {
                        log::warn!("accept failed: {e}");
                        tokio::time::sleep(Duration::from_millis(10)).await;
                        continue;
                    }
                };
                let _ = stream.set_nodelay(true);
                let ctx = Arc::clone(&ctx);
                let conn = http1::Builder::new()
                    .keep_alive(cfg.keep_alive)
                    .serve_connection(
                        TokioIo::new(stream),
                        service_fn(move |req| handle(req, Arc::clone(&ctx))),
                    );
                let conn = graceful.watch(conn);
                tokio::spawn(async move {
                    if let Err(e) = conn.await {
                        log::debug!("connection ended with error: {e}");
                    }
                });
            }
            _ = &mut shutdown => break,
        }
    }

    drop(listener);
    tokio::select! {
        _ = graceful.shutdown() => {}
        _ = tokio::time::sleep(DRAIN_TIMEOUT) => log::warn!("gave up draining connections after {DRAIN_TIMEOUT:?}"),
    }
    Ok(())
}

pub fn bind(addr: SocketAddr) -> Result<std::net::TcpListener, ServerError> {
    let l = std::net::TcpListener::bind(addr).map_err(|source| ServerError::Bind { addr, source })?;
    l.set_nonblocking(true)
        .map_err(|source| ServerError::Bind { addr, source })?;
    Ok(l)
}

/// Binds `cfg.addr` and serves until `shutdown` resolves. Must run inside a
/// Tokio runtime.
pub async fn serve<F>(cfg: ServerConfig, shutdown: F) -> Result<(), ServerError>
where
    F: Future<Output = ()>,
{
    let listener = TcpListener::from_std(bind(cfg.addr)?).map_err(ServerError::Runtime)?;
    serve_on(listener, cfg, shutdown).await
}

/// A server running on its own thread and runtime. Dropping the handle
/// shuts the server down.
pub struct ServerHandle {
    addr: SocketAddr,
    protocol: Protocol,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<Result<(), ServerError>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) -> Result<(), ServerError> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> Result<(), ServerError> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| ServerError::Panicked)?,
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

/// Starts a server in the background. Bind errors are reported here rather
/// than from the server thread.
pub fn spawn(cfg: ServerConfig) -> Result<ServerHandle, ServerError> {
    let std_listener = bind(cfg.addr)?;
    let addr = std_listener.local_addr().map_err(ServerError::Runtime)?;
    let workers = thread::available_parallelism().map_or(1, |n| n.get().clamp(1, 4));
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(workers)
        .thread_name(format!("farmbench-{}", cfg.protocol))
        .enable_all()
        .build()
        .map_err(ServerError::Runtime)?;
    let (tx, rx) = oneshot::channel::<()>();
    let protocol = cfg.protocol;
    let thread = thread::Builder::new()
        .name(format!("farmbench-{protocol}-server"))
        .spawn(move || {
            rt.block_on(async move {
                let listener = TcpListener::from_std(std_listener).map_err(ServerError::Runtime)?;
                serve_on(listener, cfg, async {
                    let _ = rx.await;
                })
                .await
            })
        })
        .map_err(ServerError::Runtime)?;
    Ok(ServerHandle {
        addr,
        protocol,
        stop: Some(tx),
        thread: Some(thread),
    })
}
