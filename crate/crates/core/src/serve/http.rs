use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use percent_encoding::percent_decode_str;

use super::ServerState;

const SELECTIONS: &str = "/api/selections/";

pub(super) fn router(state: Arc<ServerState>) -> Router {
    Router::new()
        .fallback(handle)
        .with_state(state)
        .layer(axum::middleware::map_response(cors))
}

async fn cors(mut response: Response) -> Response {
    let h = response.headers_mut();
    h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    h.insert(
        header::ACCESS_CONTROL_ALLOW_METHODS,
        HeaderValue::from_static("GET, HEAD, POST, OPTIONS"),
    );
    h.insert(
        header::ACCESS_CONTROL_ALLOW_HEADERS,
        HeaderValue::from_static("Range, Content-Type"),
    );
    h.insert(
        header::ACCESS_CONTROL_EXPOSE_HEADERS,
        HeaderValue::from_static("Content-Range, Content-Length, Accept-Ranges"),
    );
    response
}

fn status(code: StatusCode) -> Response {
    (code, code.canonical_reason().unwrap_or_default().to_string()).into_response()
}

async fn handle(
    State(state): State<Arc<ServerState>>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let path = uri.path();
    if method == Method::OPTIONS {
        return StatusCode::NO_CONTENT.into_response();
    }
    if let Some(uid) = path.strip_prefix(SELECTIONS) {
        return selections(&state, &method, uid, &body);
    }
    if method != Method::GET && method != Method::HEAD {
        return status(StatusCode::METHOD_NOT_ALLOWED);
    }
    let (root, rel) = if let Some(rel) = path.strip_prefix("/viewer/") {
        match state.viewer_dir() {
            Some(dir) => (dir.to_path_buf(), rel),
            None => return status(StatusCode::NOT_FOUND),
        }
    } else {
        let rest = path.trim_start_matches('/');
        let (uid, rel) = rest.split_once('/').unwrap_or((rest, ""));
        match state.mount_root(uid) {
            Some(root) => (root, rel),
            None => return status(StatusCode::NOT_FOUND),
        }
    };
    let Some(file) = contained_path(&root, rel) else {
        return status(StatusCode::NOT_FOUND);
    };
    let bytes = match tokio::fs::read(&file).await {
        Ok(b) => b,
        Err(_) => return status(StatusCode::NOT_FOUND),
    };
    let mut response = file_response(&file, bytes, headers.get(header::RANGE));
    if method == Method::HEAD {
        let len = axum::body::HttpBody::size_hint(response.body()).exact().unwrap_or(0);
        *response.body_mut() = Body::empty();
        response.headers_mut().insert(header::CONTENT_LENGTH, HeaderValue::from(len));
    }
    response
}

fn selections(state: &ServerState, method: &Method, uid: &str, body: &[u8]) -> Response {
    match *method {
        Method::GET | Method::HEAD => match state.selection(uid) {
            Some(ids) => (
                [(header::CONTENT_TYPE, "application/json")],
                serde_json::to_vec(ids.as_ref()).expect("string list serializes"),
            )
                .into_response(),
            None => status(StatusCode::NOT_FOUND),
        },
        Method::POST => {
            if state.selection(uid).is_none() {
                return status(StatusCode::NOT_FOUND);
            }
            match serde_json::from_slice::<Vec<String>>(body) {
                Ok(ids) => {
                    if state.replace_selection(uid, ids) {
                        StatusCode::NO_CONTENT.into_response()
                    } else {
                        status(StatusCode::NOT_FOUND)
                    }
                }
                Err(_) => status(StatusCode::BAD_REQUEST),
            }
        }
        _ => status(StatusCode::METHOD_NOT_ALLOWED),
    }
}

/// Maps a url path below `root` to a regular file inside it, refusing
/// dot segments and symlinks that leave the root.
fn contained_path(root: &Path, rel: &str) -> Option<PathBuf> {
    let mut path = root.to_path_buf();
    for segment in rel.split('/') {
        let segment = percent_decode_str(segment).decode_utf8().ok()?;
        if segment.is_empty() || segment == "." || segment == ".." || segment.contains(['/', '\\', '\0']) {
            return None;
        }
        path.push(segment.as_ref());
    }
    let canonical = path.canonicalize().ok()?;
    let root = root.canonicalize().ok()?;
    (canonical.starts_with(&root) && canonical.is_file()).then_some(canonical)
}

pub(crate) fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => "application/json",
        Some("bin") => "application/octet-stream",
        Some("html") | Some("htm") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("wasm") => "application/wasm",
        Some("txt") => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

#[derive(Debug, PartialEq, Eq)]
pub(crate) enum RangeRequest {
    /// No usable range header; serve the whole body.
    Full,
    /// Inclusive byte range.
    Partial(u64, u64),
    Unsatisfiable,
}

/// Single-range `bytes=` parsing. Multi-range and malformed headers are
/// ignored, as permitted for servers that do not support them.
pub(crate) fn parse_range(value: &str, len: u64) -> RangeRequest {
    let Some(spec) = value.trim().strip_prefix("bytes=") else {
        return RangeRequest::Full;
    };
    if spec.contains(',') {
        return RangeRequest::Full;
    }
    let Some((a, b)) = spec.trim().split_once('-') else {
        return RangeRequest::Full;
    };
    let (a, b) = (a.trim(), b.trim());
    if a.is_empty() {
        let Ok(n) = b.parse::<u64>() else {
            return RangeRequest::Full;
        };
        if n == 0 || len == 0 {
            return RangeRequest::Unsatisfiable;
        }
        return RangeRequest::Partial(len.saturating_sub(n), len - 1);
    }
    let Ok(start) = a.parse::<u64>() else {
        return RangeRequest::Full;
    };
    let end = if b.is_empty() {
        u64::MAX
    } else {
        match b.parse::<u64>() {
            Ok(end) if end >= start => end,
            _ => return RangeRequest::Full,
        }
    };
    if start >= len {
        return RangeRequest::Unsatisfiable;
    }
    RangeRequest::Partial(start, end.min(len - 1))
}

fn file_response(path: &Path, bytes: Vec<u8>, range: Option<&HeaderValue>) -> Response {
    let len = bytes.len() as u64;
    let ctype = content_type(path);
    let request = range
        .and_then(|v| v.to_str().ok())
        .map_or(RangeRequest::Full, |v| parse_range(v, len));
    let mut response = match request {
        RangeRequest::Full => (StatusCode::OK, bytes).into_response(),
        RangeRequest::Partial(start, end) => {
            let slice = bytes[start as usize..=end as usize].to_vec();
            let mut r = (StatusCode::PARTIAL_CONTENT, slice).into_response();
            r.headers_mut().insert(
                header::CONTENT_RANGE,
                HeaderValue::from_str(&format!("bytes {start}-{end}/{len}")).expect("ascii header"),
            );
            r
        }
        RangeRequest::Unsatisfiable => {
            let mut r = status(StatusCode::RANGE_NOT_SATISFIABLE);
            r.headers_mut().insert(
                header::CONTENT_RANGE,
                HeaderValue::from_str(&format!("bytes */{len}")).expect("ascii header"),
            );
            return r;
        }
    };
    let h = response.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static(ctype));
    h.insert(header::ACCEPT_RANGES, HeaderValue::from_static("bytes"));
    response
}
