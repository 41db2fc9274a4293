//! Protocol-neutral RPC messages and the two wire codecs that carry them:
//! a SOAP-1.1-shaped XML envelope and a percent-encoded path form.

pub mod envelope;
pub mod rest;
pub mod xml;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use envelope::{
    encode_envelope_request, encode_envelope_response, parse_envelope_request, parse_envelope_response, ParsedResponse,
};
pub use rest::{decode_rest_response, encode_rest_response, rest_decode, rest_encode, RestError};
pub use xml::{xml_escape, xml_unescape, EscapeError};

/// Which wire format a server or client speaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Envelope,
    Rest,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::Envelope, Protocol::Rest];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Envelope => "envelope",
            Protocol::Rest => "rest",
        }
    }

    /// Default listening port: 3000 for rest, 8000 for envelope.
    pub fn default_port(self) -> u16 {
        match self {
            Protocol::Envelope => 8000,
            Protocol::Rest => 3000,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown protocol {0:?} (expected envelope or rest)")]
pub struct UnknownProtocol(pub String);

impl FromStr for Protocol {
    type Err = UnknownProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "envelope" => Ok(Protocol::Envelope),
            "rest" => Ok(Protocol::Rest),
            other => Err(UnknownProtocol(other.to_string())),
        }
    }
}

/// Methods exposed by the Demo service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Push,
    Pop,
    Evaluate,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Push, Method::Pop, Method::Evaluate];

    pub fn name(self) -> &'static str {
        match self {
            Method::Push => "push",
            Method::Pop => "pop",
            Method::Evaluate => "evaluate",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Method::Pop => 0,
            Method::Push | Method::Evaluate => 1,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RpcRequest {
    Push(String),
    Pop,
    /// Genome in `{0,1}` wire form.
    Evaluate(String),
}

impl RpcRequest {
    pub fn method(&self) -> Method {
        match self {
            RpcRequest::Push(_) => Method::Push,
            RpcRequest::Pop => Method::Pop,
            RpcRequest::Evaluate(_) => Method::Evaluate,
        }
    }

    pub fn params(&self) -> Vec<&str> {
        match self {
            RpcRequest::Push(s) | RpcRequest::Evaluate(s) => vec![s.as_str()],
            RpcRequest::Pop => Vec::new(),
        }
    }

    /// Builds a request from a method and positional parameters, checking
    /// arity.
    pub fn from_parts(method: Method, mut params: Vec<String>) -> Result<Self, Fault> {
        if params.len() != method.arity() {
            return Err(Fault::client(format!(
                "method {method} takes {} parameter(s), got {}",
                method.arity(),
                params.len()
            )));
        }
        Ok(match method {
            Method::Push => RpcRequest::Push(params.remove(0)),
            Method::Pop => RpcRequest::Pop,
            Method::Evaluate => RpcRequest::Evaluate(params.remove(0)),
        })
    }
}

/// Structured error carried back to the caller.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Error)]
#[error("{code}: {detail}")]
pub struct Fault {
    pub code: String,
    pub detail: String,
}

impl Fault {
    pub const CLIENT: &'static str = "Client";
    pub const UNKNOWN_METHOD: &'static str = "Client.UnknownMethod";
    pub const BAD_XML: &'static str = "Client.BadXML";
    pub const SERVER: &'static str = "Server";

    pub fn new(code: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            detail: detail.into(),
        }
    }

    pub fn client(detail: impl Into<String>) -> Self {
        Self::new(Self::CLIENT, detail)
    }

    pub fn unknown_method(name: &str) -> Self {
        Self::new(Self::UNKNOWN_METHOD, format!("no method named {name:?}"))
    }

    pub fn bad_xml(offset: usize, reason: impl fmt::Display) -> Self {
        Self::new(Self::BAD_XML, format!("at byte {offset}: {reason}"))
    }

    pub fn server(detail: impl Into<String>) -> Self {
        Self::new(Self::SERVER, detail)
    }

    /// Caller-side faults: resending the same request cannot succeed.
    pub fn is_client_fault(&self) -> bool {
        self.code == Self::CLIENT || self.code.starts_with("Client.")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RpcResponse {
    Result(String),
    Fault(Fault),
}

impl RpcResponse {
    pub fn ok(s: impl Into<String>) -> Self {
        RpcResponse::Result(s.into())
    }

    pub fn into_result(self) -> Result<String, Fault> {
        match self {
            RpcResponse::Result(s) => Ok(s),
            RpcResponse::Fault(f) => Err(f),
        }
    }
}

impl From<Result<String, Fault>> for RpcResponse {
    fn from(r: Result<String, Fault>) -> Self {
        match r {
            Ok(s) => RpcResponse::Result(s),
            Err(f) => RpcResponse::Fault(f),
        }
    }
}
