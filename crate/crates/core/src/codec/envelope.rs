//! SOAP-1.1-shaped envelope encoding for [`RpcRequest`] and [`RpcResponse`].

use super::xml::{self, xml_escape, Element};
use super::{Fault, Method, RpcRequest, RpcResponse};

pub const SOAP_ENV_NS: &str = "http://schemas.xmlsoap.org/soap/envelope/";
pub const SERVICE_NS: &str = "urn:Demo";
pub const XSI_NS: &str = "http://www.w3.org/2001/XMLSchema-instance";
pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema";

const HEAD: &str = concat!(
    r#"<?xml version="1.0" encoding="UTF-8"?>"#,
    r#"<soap:Envelope xmlns:soap="http://schemas.xmlsoap.org/soap/envelope/">"#,
    r#"<soap:Body>"#
);
const TAIL: &str = "</soap:Body></soap:Envelope>";
const TYPED: &str = concat!(
    r#" xsi:type="xsd:string""#,
    r#" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance""#,
    r#" xmlns:xsd="http://www.w3.org/2001/XMLSchema""#
);

fn typed_element(out: &mut String, name: &str, value: &str) {
    out.push('<');
    out.push_str(name);
    out.push_str(TYPED);
    out.push('>');
    out.push_str(&xml_escape(value));
    out.push_str("</");
    out.push_str(name);
    out.push('>');
}

pub fn encode_envelope_request(req: &RpcRequest) -> Vec<u8> {
    let method = req.method().name();
    let params = req.params();
    let mut out = String::with_capacity(HEAD.len() + TAIL.len() + 240 + params.iter().map(|p| p.len()).sum::<usize>());
    out.push_str(HEAD);
    out.push_str("<ns:");
    out.push_str(method);
    out.push_str(r#" xmlns:ns="urn:Demo">"#);
    for (i, p) in params.iter().enumerate() {
        typed_element(&mut out, &format!("c{i}"), p);
    }
    out.push_str("</ns:");
    out.push_str(method);
    out.push('>');
    out.push_str(TAIL);
    out.into_bytes()
}

pub fn encode_envelope_response(method: Method, resp: &RpcResponse) -> Vec<u8> {
    let mut out = String::with_capacity(512);
    out.push_str(HEAD);
    match resp {
        RpcResponse::Result(value) => {
            out.push_str("<ns:");
            out.push_str(method.name());
            out.push_str(r#"Response xmlns:ns="urn:Demo">"#);
            typed_element(&mut out, "result", value);
            out.push_str("</ns:");
            out.push_str(method.name());
            out.push_str("Response>");
        }
        RpcResponse::Fault(f) => {
            out.push_str("<soap:Fault><faultcode>soap:");
            out.push_str(&xml_escape(&f.code));
            out.push_str("</faultcode><faultstring>");
            out.push_str(&xml_escape(&f.detail));
            out.push_str("</faultstring></soap:Fault>");
        }
    }
    out.push_str(TAIL);
    out.into_bytes()
}

/// Body payload of an envelope: the Envelope's prefix plus the single
/// element inside soap:Body.
fn open_body(bytes: &[u8]) -> Result<(Option<String>, Element), Fault> {
    let text = std::str::from_utf8(bytes).map_err(|e| Fault::bad_xml(e.valid_up_to(), "invalid UTF-8"))?;
    let root = xml::parse_document(text).map_err(|e| Fault::bad_xml(e.offset, e.reason))?;
    if !root.is(Some(SOAP_ENV_NS), "Envelope") {
        return Err(Fault::client(format!(
            "root element is <{}>, expected soap:Envelope",
            root.local
        )));
    }
    let env_prefix = root.prefix.clone();
    let mut body = None;
    for child in root.children {
        match child.local.as_str() {
            "Header" if body.is_none() && child.namespace.as_deref() == Some(SOAP_ENV_NS) => {}
            "Body" if body.is_none() && child.namespace.as_deref() == Some(SOAP_ENV_NS) => body = Some(child),
            other => return Err(Fault::client(format!("unexpected <{other}> in soap:Envelope"))),
        }
    }
    let mut body = body.ok_or_else(|| Fault::client("missing soap:Body"))?;
    if body.children.len() != 1 {
        return Err(Fault::client(format!(
            "soap:Body must hold exactly one element, found {}",
            body.children.len()
        )));
    }
    Ok((env_prefix, body.children.remove(0)))
}

pub fn parse_envelope_request(bytes: &[u8]) -> Result<RpcRequest, Fault> {
    let (_, call) = open_body(bytes)?;
    let method = Method::from_name(&call.local).ok_or_else(|| Fault::unknown_method(&call.local))?;
    let mut params = Vec::with_capacity(call.children.len());
    for (i, p) in call.children.into_iter().enumerate() {
        if p.local != format!("c{i}") || p.prefix.is_some() {
            return Err(Fault::client(format!(
                "parameter {i} of {method} is <{}>, expected <c{i}>",
                p.local
            )));
        }
        params.push(p.text);
    }
    RpcRequest::from_parts(method, params)
}

/// A decoded envelope response. `method` is `None` for faults, which do not
/// name the call they answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub method: Option<Method>,
    pub response: RpcResponse,
}

pub fn parse_envelope_response(bytes: &[u8]) -> Result<ParsedResponse, Fault> {
    let (env_prefix, el) = open_body(bytes)?;
    if el.is(Some(SOAP_ENV_NS), "Fault") {
        let code = el
            .child("faultcode")
            .ok_or_else(|| Fault::client("soap:Fault without faultcode"))?;
        let detail = el
            .child("faultstring")
            .ok_or_else(|| Fault::client("soap:Fault without faultstring"))?;
        let code = match &env_prefix {
            Some(p) => code.text.strip_prefix(&format!("{p}:")).unwrap_or(&code.text),
            None => code.text.as_str(),
        };
        return Ok(ParsedResponse {
            method: None,
            response: RpcResponse::Fault(Fault::new(code, detail.text.clone())),
        });
    }
    let name = el
        .local
        .strip_suffix("Response")
        .ok_or_else(|| Fault::client(format!("<{}> is not a method response", el.local)))?;
    let method = Method::from_name(name).ok_or_else(|| Fault::unknown_method(name))?;
    let result = match el.children.as_slice() {
        [only] if only.local == "result" => only.text.clone(),
        _ => return Err(Fault::client(format!("{}Response must hold one <result>", method))),
    };
    Ok(ParsedResponse {
        method: Some(method),
        response: RpcResponse::Result(result),
    })
}
