//! Local HTTP server speaking the synthesis wire contract, backed by
//! [`MockBackend`]. Lets the HTTP client be exercised without a GPU service.

use std::sync::Arc;
use std::thread::JoinHandle;

use tiny_http::{Header, Response, Server};

use super::{MockBackend, MockFault, SynthError, SynthesisBackend, SynthesisRequest, REFERENCE_COUNT};

pub struct MockServer {
    server: Arc<Server>,
    handle: Option<JoinHandle<()>>,
    url: String,
}

impl MockServer {
    /// Binds an ephemeral localhost port and serves until dropped.
    pub fn start(fault: MockFault) -> std::io::Result<Self> {
        let server = Arc::new(Server::http("127.0.0.1:0").map_err(std::io::Error::other)?);
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| std::io::Error::other("server has no IP address"))?;
        let worker = Arc::clone(&server);
        let handle = std::thread::spawn(move || serve(&worker, MockBackend { fault }));
        Ok(Self {
            server,
            handle: Some(handle),
            url: format!("http://127.0.0.1:{port}"),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("ascii header")
}

fn json_error(status: u16, message: &str) -> Response<std::io::Cursor<Vec<u8>>> {
    let body = serde_json::json!({ "error": message }).to_string();
    Response::from_data(body.into_bytes())
        .with_status_code(status)
        .with_header(header("Content-Type", "application/json"))
}

fn serve(server: &Server, backend: MockBackend) {
    for mut req in server.incoming_requests() {
        if req.method() != &tiny_http::Method::Post || req.url() != "/synthesize" {
            let _ = req.respond(json_error(404, "not found"));
            continue;
        }
        let content_type = req
            .headers()
            .iter()
            .find(|h| h.field.equiv("Content-Type"))
            .map(|h| h.value.as_str().to_string())
            .unwrap_or_default();
        let mut body = Vec::new();
        if let Err(e) = req.as_reader().read_to_end(&mut body) {
            let _ = req.respond(json_error(400, &e.to_string()));
            continue;
        }
        let response = match decode_request(&content_type, &body).and_then(|r| backend.submit(&r)) {
            Ok(reply) => Response::from_data(reply.image)
                .with_status_code(200)
                .with_header(header("Content-Type", "image/png"))
                .with_header(header("X-Backend-Id", &reply.backend_id)),
            Err(SynthError::Backend { status, message }) => json_error(status, &message),
            Err(e) => json_error(400, &e.to_string()),
        };
        let _ = req.respond(response);
    }
}

/// Splits a `multipart/form-data` body into `(name, bytes)` parts.
pub fn parse_multipart(content_type: &str, body: &[u8]) -> Result<Vec<(String, Vec<u8>)>, String> {
    let boundary = content_type
        .split(';')
        .filter_map(|p| p.trim().strip_prefix("boundary="))
        .next()
        .ok_or("missing multipart boundary")?
        .trim_matches('"');
    let delim = format!("--{boundary}").into_bytes();
    let mut parts = Vec::new();
    let mut pos = find(body, &delim, 0).ok_or("no opening boundary")? + delim.len();
    loop {
        if body[pos..].starts_with(b"--") {
            break;
        }
        pos += 2; // CRLF after the boundary line
        let head_end = find(body, b"\r\n\r\n", pos).ok_or("unterminated part headers")?;
        let headers = std::str::from_utf8(&body[pos..head_end]).map_err(|_| "non-UTF-8 part headers")?;
        let name = headers
            .lines()
            .find(|l| l.to_ascii_lowercase().starts_with("content-disposition"))
            .and_then(|l| l.split(';').find_map(|p| p.trim().strip_prefix("name=")))
            .map(|n| n.trim_matches('"').to_string())
            .ok_or("part without a name")?;
        let data_start = head_end + 4;
        let next = find(body, &delim, data_start).ok_or("unterminated part")?;
        let data_end = next.checked_sub(2).filter(|&e| e >= data_start).ok_or("malformed part")?;
        parts.push((name, body[data_start..data_end].to_vec()));
        pos = next + delim.len();
    }
    Ok(parts)
}

fn find(hay: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    hay.get(from..)?
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|i| i + from)
}

fn decode_request(content_type: &str, body: &[u8]) -> Result<SynthesisRequest, SynthError> {
    let bad = |m: String| SynthError::Validation(m);
    let parts = parse_multipart(content_type, body).map_err(|e| bad(e.to_string()))?;
    let take = |name: &str| {
        parts
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.clone())
            .ok_or_else(|| bad(format!("missing part {name:?}")))
    };
    let params: serde_json::Value =
        serde_json::from_slice(&take("params")?).map_err(|e| bad(format!("params: {e}")))?;
    let text = |k: &str| params.get(k).and_then(|v| v.as_str()).map(str::to_string);
    let uint = |k: &str| params.get(k).and_then(|v| v.as_u64());
    let missing = |k: &str| bad(format!("params.{k} missing or mistyped"));
    let mut reference_images = Vec::with_capacity(REFERENCE_COUNT);
    for i in 0..REFERENCE_COUNT {
        reference_images.push(take(&format!("ref{i}"))?);
    }
    let req = SynthesisRequest {
        depth_png: take("depth")?,
        mask_png: take("mask")?,
        reference_images,
        positive_prompt: text("positive_prompt").ok_or_else(|| missing("positive_prompt"))?,
        negative_prompt: text("negative_prompt").ok_or_else(|| missing("negative_prompt"))?,
        seed: uint("seed").ok_or_else(|| missing("seed"))?,
        denoise_strength: params
            .get("denoise_strength")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| missing("denoise_strength"))?,
        output_size: (
            uint("width").ok_or_else(|| missing("width"))? as u32,
            uint("height").ok_or_else(|| missing("height"))? as u32,
        ),
        scene_ref: String::new(),
    };
    req.validate()?;
    Ok(req)
}
