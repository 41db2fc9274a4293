//! Entity escaping and a small namespace-aware XML reader.
//!
//! The reader builds an element tree from a complete document. It handles
//! the XML declaration, processing instructions, comments, CDATA sections,
//! character references and namespace declarations; DTDs are rejected.
//! Nesting depth is bounded so hostile input cannot exhaust the stack.

use std::fmt;

use thiserror::Error;

const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed entity at byte {offset}: {reason}")]
pub struct EscapeError {
    pub offset: usize,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {offset}: {reason}")]
pub struct XmlError {
    pub offset: usize,
    pub reason: String,
}

impl XmlError {
    fn new(offset: usize, reason: impl fmt::Display) -> Self {
        Self {
            offset,
            reason: reason.to_string(),
        }
    }
}

impl From<EscapeError> for XmlError {
    fn from(e: EscapeError) -> Self {
        Self::new(e.offset, e.reason)
    }
}

pub fn xml_escape(s: &str) -> String {
    if !s.contains(['&', '<', '>', '"', '\'']) {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len() + s.len() / 8);
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Inverse of [`xml_escape`]; also accepts decimal and hex character
/// references.
pub fn xml_unescape(s: &str) -> Result<String, EscapeError> {
    unescape_at(s, 0)
}

fn unescape_at(s: &str, base: usize) -> Result<String, EscapeError> {
    if !s.contains('&') {
        return Ok(s.to_string());
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    let mut pos = 0;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let offset = base + pos + amp;
        let after = &rest[amp + 1..];
        let semi = after.find(';').ok_or(EscapeError {
            offset,
            reason: "unterminated entity",
        })?;
        let name = &after[..semi];
        let c = match name {
            "amp" => '&',
            "lt" => '<',
            "gt" => '>',
            "quot" => '"',
            "apos" => '\'',
            _ => char_reference(name).ok_or(EscapeError {
                offset,
                reason: "unknown entity or invalid character reference",
            })?,
        };
        out.push(c);
        let consumed = amp + 1 + semi + 1;
        rest = &rest[consumed..];
        pos += consumed;
    }
    out.push_str(rest);
    Ok(out)
}

fn char_reference(name: &str) -> Option<char> {
    let digits = name.strip_prefix('#')?;
    let code = match digits.strip_prefix('x') {
        Some(hex) if !hex.is_empty() && hex.bytes().all(|b| b.is_ascii_hexdigit()) => {
            u32::from_str_radix(hex, 16).ok()?
        }
        None if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) => digits.parse().ok()?,
        _ => return None,
    };
    char::from_u32(code)
}

/// An element with its resolved namespace and direct text content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub prefix: Option<String>,
    pub local: String,
    pub namespace: Option<String>,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Element>,
    /// Concatenated character data directly inside this element.
    pub text: String,
    pub offset: usize,
}

impl Element {
    pub fn is(&self, namespace: Option<&str>, local: &str) -> bool {
        self.local == local && self.namespace.as_deref() == namespace
    }

    pub fn child(&self, local: &str) -> Option<&Element> {
        self.children.iter().find(|c| c.local == local)
    }
}

struct Reader<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn starts_with(&self, pat: &str) -> bool {
        self.bytes[self.pos..].starts_with(pat.as_bytes())
    }

    fn skip_ws(&mut self) -> bool {
        let start = self.pos;
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
            self.pos += 1;
        }
        self.pos > start
    }

    /// Advances past `end`, returning the text before it.
    fn take_until(&mut self, end: &str, what: &str) -> Result<&'a str, XmlError> {
        let hay = &self.src[self.pos..];
        match hay.find(end) {
            Some(i) => {
                let s = &hay[..i];
                self.pos += i + end.len();
                Ok(s)
            }
            None => Err(XmlError::new(self.pos, format!("unterminated {what}"))),
        }
    }

    fn name(&mut self) -> Result<&'a str, XmlError> {
        let start = self.pos;
        let is_start = |b: u8| b.is_ascii_alphabetic() || b == b'_' || b == b':' || b >= 0x80;
        let is_rest = |b: u8| is_start(b) || b.is_ascii_digit() || b == b'-' || b == b'.';
        match self.peek() {
            Some(b) if is_start(b) => self.pos += 1,
            _ => return Err(XmlError::new(start, "expected a name")),
        }
        while matches!(self.peek(), Some(b) if is_rest(b)) {
            self.pos += 1;
        }
        // Names only stop at ASCII bytes, so this is a char boundary.
        Ok(&self.src[start..self.pos])
    }

    fn expect(&mut self, b: u8) -> Result<(), XmlError> {
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(XmlError::new(self.pos, format!("expected '{}'", b as char)))
        }
    }
}

struct Open {
    element: Element,
    qname: String,
    scope_len: usize,
}

/// Parses a complete document and returns its root element.
pub fn parse_document(src: &str) -> Result<Element, XmlError> {
    let mut r = Reader {
        src,
        bytes: src.as_bytes(),
        pos: 0,
    };
    if r.starts_with("\u{feff}") {
        r.pos += 3;
    }
    let mut stack: Vec<Open> = Vec::new();
    // In-scope namespace bindings; `None` prefix is the default namespace.
    let mut scope: Vec<(Option<String>, String)> = Vec::new();
    let mut root: Option<Element> = None;

    while r.pos < r.bytes.len() {
        let at = r.pos;
        if r.peek() != Some(b'<') {
            let end = src[at..].find('<').map_or(src.len(), |i| at + i);
            let raw = &src[at..end];
            r.pos = end;
            match stack.last_mut() {
                Some(open) => open.element.text.push_str(&unescape_at(raw, at)?),
                None if raw.trim_matches(|c| matches!(c, ' ' | '\t' | '\r' | '\n')).is_empty() => {}
                None => return Err(XmlError::new(at, "text outside the root element")),
            }
            continue;
        }

        if r.starts_with("<?") {
            r.pos += 2;
            r.take_until("?>", "processing instruction")?;
        } else if r.starts_with("<!--") {
            r.pos += 4;
            r.take_until("-->", "comment")?;
        } else if r.starts_with("<![CDATA[") {
            r.pos += 9;
            let data = r.take_until("]]>", "CDATA section")?;
            match stack.last_mut() {
                Some(open) => open.element.text.push_str(data),
                None => return Err(XmlError::new(at, "CDATA outside the root element")),
            }
        } else if r.starts_with("<!") {
            return Err(XmlError::new(at, "document type declarations are not accepted"));
        } else if r.starts_with("</") {
            r.pos += 2;
            let name = r.name()?;
            r.skip_ws();
            r.expect(b'>')?;
            let open = stack
                .pop()
                .ok_or_else(|| XmlError::new(at, format!("unexpected closing tag </{name}>")))?;
            if open.qname != name {
                return Err(XmlError::new(
                    at,
                    format!("closing tag </{name}> does not match <{}>", open.qname),
                ));
            }
            scope.truncate(open.scope_len);
            attach(&mut stack, &mut root, open.element, at)?;
        } else {
            r.pos += 1;
            let qname = r.name()?;
            let mut attrs: Vec<(String, String)> = Vec::new();
            let self_closing = loop {
                let had_ws = r.skip_ws();
                match r.peek() {
                    Some(b'>') => {
                        r.pos += 1;
                        break false;
                    }
                    Some(b'/') => {
                        r.pos += 1;
                        r.expect(b'>')?;
                        break true;
                    }
                    None => return Err(XmlError::new(r.pos, "unterminated start tag")),
                    Some(_) if !had_ws => return Err(XmlError::new(r.pos, "expected whitespace before attribute")),
                    Some(_) => {}
                }
                let attr_at = r.pos;
                let key = r.name()?;
                r.skip_ws();
                r.expect(b'=')?;
                r.skip_ws();
                let quote = match r.peek() {
                    Some(q @ (b'"' | b'\'')) => q,
                    _ => return Err(XmlError::new(r.pos, "expected quoted attribute value")),
                };
                r.pos += 1;
                let value_at = r.pos;
                let raw = r.take_until(if quote == b'"' { "\"" } else { "'" }, "attribute value")?;
                if raw.contains('<') {
                    return Err(XmlError::new(value_at, "'<' in attribute value"));
                }
                if attrs.iter().any(|(k, _)| k == key) {
                    return Err(XmlError::new(attr_at, format!("duplicate attribute {key}")));
                }
                attrs.push((key.to_string(), unescape_at(raw, value_at)?));
            };

            if stack.len() >= MAX_DEPTH {
                return Err(XmlError::new(at, "elements nested too deeply"));
            }
            if root.is_some() {
                return Err(XmlError::new(at, "content after the root element"));
            }

            let scope_len = scope.len();
            for (k, v) in &attrs {
                if k == "xmlns" {
                    scope.push((None, v.clone()));
                } else if let Some(p) = k.strip_prefix("xmlns:") {
                    if v.is_empty() {
                        return Err(XmlError::new(at, format!("empty namespace for prefix {p}")));
                    }
                    scope.push((Some(p.to_string()), v.clone()));
                }
            }
            let (prefix, local) = match qname.split_once(':') {
                Some((p, l)) if !p.is_empty() && !l.is_empty() && !l.contains(':') => {
                    (Some(p.to_string()), l.to_string())
                }
                Some(_) => return Err(XmlError::new(at, format!("malformed qualified name {qname}"))),
                None => (None, qname.to_string()),
            };
            let namespace = match &prefix {
                Some(p) => Some(
                    lookup(&scope, Some(p))
                        .ok_or_else(|| XmlError::new(at, format!("undeclared namespace prefix {p}")))?,
                ),
                None => lookup(&scope, None).filter(|uri| !uri.is_empty()),
            };
            let element = Element {
                prefix,
                local,
                namespace,
                attrs,
                children: Vec::new(),
                text: String::new(),
                offset: at,
            };
            if self_closing {
                scope.truncate(scope_len);
                attach(&mut stack, &mut root, element, at)?;
            } else {
                stack.push(Open {
                    element,
                    qname: qname.to_string(),
                    scope_len,
                });
            }
        }
    }

    if let Some(open) = stack.last() {
        return Err(XmlError::new(src.len(), format!("unclosed element <{}>", open.qname)));
    }
    root.ok_or_else(|| XmlError::new(src.len(), "no root element"))
}

fn lookup(scope: &[(Option<String>, String)], prefix: Option<&str>) -> Option<String> {
    scope
        .iter()
        .rev()
        .find(|(p, _)| p.as_deref() == prefix)
        .map(|(_, uri)| uri.clone())
}

fn attach(stack: &mut [Open], root: &mut Option<Element>, el: Element, at: usize) -> Result<(), XmlError> {
    match stack.last_mut() {
        Some(parent) => parent.element.children.push(el),
        None if root.is_none() => *root = Some(el),
        None => return Err(XmlError::new(at, "more than one root element")),
    }
    Ok(())
}
