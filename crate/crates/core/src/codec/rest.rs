//! Path-parameter form: `/push/{cad}`, `/pop/`, `/evaluate/{bits}` with
//! plain-text bodies and HTTP status codes standing in for faults.

use thiserror::Error;

use super::{Fault, RpcRequest, RpcResponse};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RestError {
    #[error("no route for {0:?}")]
    UnknownRoute(String),
    #[error("malformed percent escape at byte {0}")]
    BadPercent(usize),
    #[error("percent-decoded path segment is not UTF-8")]
    BadUtf8,
}

fn is_unreserved(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b'~')
}

pub fn percent_encode(s: &str) -> String {
    const HEX: &[u8; 16] = b"0123456789ABCDEF";
    if s.bytes().all(is_unreserved) {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    for &b in s.as_bytes() {
        if is_unreserved(b) {
            out.push(b as char);
        } else {
            out.push('%');
            out.push(HEX[(b >> 4) as usize] as char);
            out.push(HEX[(b & 0xf) as usize] as char);
        }
    }
    out
}

pub fn percent_decode(s: &str) -> Result<String, RestError> {
    if !s.contains('%') {
        return Ok(s.to_string());
    }
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = bytes.get(i + 1..i + 3).ok_or(RestError::BadPercent(i))?;
            let hi = (hex[0] as char).to_digit(16).ok_or(RestError::BadPercent(i))?;
            let lo = (hex[1] as char).to_digit(16).ok_or(RestError::BadPercent(i))?;
            out.push((hi * 16 + lo) as u8);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| RestError::BadUtf8)
}

pub fn rest_encode(req: &RpcRequest) -> String {
    match req {
        RpcRequest::Push(s) => format!("/push/{}", percent_encode(s)),
        RpcRequest::Pop => "/pop/".to_string(),
        RpcRequest::Evaluate(g) => format!("/evaluate/{}", percent_encode(g)),
    }
}

pub fn rest_decode(path: &str) -> Result<RpcRequest, RestError> {
    if let Some(rest) = path.strip_prefix("/push/") {
        return percent_decode(rest).map(RpcRequest::Push);
    }
    if let Some(rest) = path.strip_prefix("/evaluate/") {
        return percent_decode(rest).map(RpcRequest::Evaluate);
    }
    match path {
        "/pop/" | "/pop" => Ok(RpcRequest::Pop),
        other => Err(RestError::UnknownRoute(other.to_string())),
    }
}

/// HTTP status and plain-text body for a response.
pub fn encode_rest_response(resp: &RpcResponse) -> (u16, String) {
    match resp {
        RpcResponse::Result(s) => (200, s.clone()),
        RpcResponse::Fault(f) if f.is_client_fault() => (400, f.detail.clone()),
        RpcResponse::Fault(f) => (500, f.detail.clone()),
    }
}

pub fn decode_rest_response(status: u16, body: String) -> RpcResponse {
    match status {
        200..=299 => RpcResponse::Result(body),
        400..=499 => RpcResponse::Fault(Fault::client(body)),
        _ => RpcResponse::Fault(Fault::server(body)),
    }
}
