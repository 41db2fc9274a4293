//! HTTP transport for the master-slave GA: a slave server speaking either
//! wire protocol and the matching clients.

pub mod client;
pub mod server;

pub use client::{
    evaluate_with_retry, BatchError, CallError, ClientOptions, EchoError, Endpoint, EndpointError, EvalError, Phase,
    PoolError, RemoteEvaluator, RetryPolicy, RpcClient, WorkerPool,
};
pub use server::{serve, serve_on, spawn, DemoService, ServerConfig, ServerError, ServerHandle};
