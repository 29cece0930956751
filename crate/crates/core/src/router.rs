//! HTTP-level request plumbing: method/URL parsing into resource paths,
//! content negotiation between JSON and XML, and the request/response
//! types the service layer dispatches on.

use crate::instance::ResourcePath;
use crate::repr::{decode_segment, WireFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Put,
    Post,
    Delete,
    Head,
    Options,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Put => "PUT",
            Method::Post => "POST",
            Method::Delete => "DELETE",
            Method::Head => "HEAD",
            Method::Options => "OPTIONS",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Some(match s.to_ascii_uppercase().as_str() {
            "GET" => Method::Get,
            "PUT" => Method::Put,
            "POST" => Method::Post,
            "DELETE" => Method::Delete,
            "HEAD" => Method::Head,
            "OPTIONS" => Method::Options,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ApiRequest {
    pub method: Method,
    /// Raw path, percent-encoded, without the query string.
    pub path: String,
    /// Raw query string without the leading '?'.
    pub query: Option<String>,
    pub accept: Option<String>,
    pub content_type: Option<String>,
    pub authorization: Option<String>,
    pub origin: Option<String>,
    pub body: Vec<u8>,
}

impl ApiRequest {
    pub fn new(method: Method, path: impl Into<String>) -> ApiRequest {
        ApiRequest {
            method,
            path: path.into(),
            query: None,
            accept: None,
            content_type: None,
            authorization: None,
            origin: None,
            body: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl ApiResponse {
    pub fn new(status: u16) -> ApiResponse {
        ApiResponse {
            status,
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn header(mut self, name: &str, value: impl Into<String>) -> ApiResponse {
        self.headers.push((name.to_string(), value.into()));
        self
    }

    pub fn body(mut self, body: impl Into<Vec<u8>>) -> ApiResponse {
        self.body = body.into();
        self
    }

    pub fn header_value(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum UrlError {
    /// Path outside /rest/ or with fewer than two segments.
    #[error("no resource at this path")]
    NotFound,
    #[error("bad request: {0}")]
    BadRequest(String),
}

/// Parse `/rest/{ModelId}/{InstanceId}(/{segment})*` plus an optional
/// `index=<i>` query parameter into a resource path. Segments are
/// percent-decoded; whether each one is a reference name or an id value
/// is decided later against the metamodel.
pub fn parse_request_url(path: &str, query: Option<&str>) -> Result<ResourcePath, UrlError> {
    let rest = path.strip_prefix("/rest/").ok_or(UrlError::NotFound)?;
    let mut segments = Vec::new();
    for raw in rest.split('/') {
        if raw.is_empty() {
            continue;
        }
        let decoded = decode_segment(raw)
            .map_err(|e| UrlError::BadRequest(e.to_string()))?;
        segments.push(decoded);
    }
    if segments.len() < 2 {
        return Err(UrlError::NotFound);
    }
    let mut iter = segments.into_iter();
    let model_id = iter.next().unwrap();
    let instance_id = iter.next().unwrap();

    let mut index = None;
    if let Some(query) = query {
        for pair in query.split('&').filter(|p| !p.is_empty()) {
            let (key, value) = pair.split_once('=').unwrap_or((pair, ""));
            if key == "index" {
                let i: usize = value.parse().map_err(|_| {
                    UrlError::BadRequest(format!("malformed index value {value:?}"))
                })?;
                index = Some(i);
            }
            // Unrecognized query parameters are ignored.
        }
    }
    Ok(ResourcePath {
        model_id,
        instance_id,
        segments: iter.collect(),
        index,
    })
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NegotiateError {
    #[error("no acceptable representation")]
    NotAcceptable,
    #[error("unsupported media type")]
    UnsupportedMediaType,
}

/// Choose the response format from Accept (absent or */* → JSON) and the
/// request-body format from Content-Type (only when a body is present).
pub fn negotiate(
    accept: Option<&str>,
    content_type: Option<&str>,
    has_body: bool,
) -> Result<(WireFormat, Option<WireFormat>), NegotiateError> {
    let response = match accept {
        None => WireFormat::Json,
        Some(header) => {
            let mut chosen = None;
            for range in header.split(',') {
                let media = range.split(';').next().unwrap_or("").trim();
                let format = match media {
                    "application/json" | "*/*" | "application/*" => WireFormat::Json,
                    "application/xml" | "text/xml" => WireFormat::Xml,
                    _ => continue,
                };
                chosen = Some(format);
                break;
            }
            chosen.ok_or(NegotiateError::NotAcceptable)?
        }
    };
    let request = if !has_body {
        None
    } else {
        let media = content_type
            .unwrap_or("application/json")
            .split(';')
            .next()
            .unwrap_or("")
            .trim();
        Some(match media {
            "application/json" => WireFormat::Json,
            "application/xml" | "text/xml" => WireFormat::Xml,
            _ => return Err(NegotiateError::UnsupportedMediaType),
        })
    };
    Ok((response, request))
}
