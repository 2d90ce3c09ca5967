//! Client for the conditioned image-synthesis service.
//!
//! A request carries the rendered depth map and instance mask, four reference
//! photographs drawn from the real pool, prompts and a seed. The service
//! must return an image with exactly the requested size; any other size is
//! rejected rather than resampled, since the mask is the label source.
//!
//! Wire contract: `POST {base}/synthesize` with a multipart form holding
//! `depth`, `mask`, `ref0`..`ref3` and a `params` JSON part
//! (`positive_prompt`, `negative_prompt`, `seed`, `denoise_strength`,
//! `width`, `height`). Success is `200` with an `image/png` body and an
//! `X-Backend-Id` header; failures carry a JSON `{"error": "..."}` body.

use std::io::Cursor;
use std::time::{Duration, Instant};

use image::{ImageFormat, ImageReader, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rasterizer::{self, DepthPolarity, RenderOutput};
use crate::rng::{splitmix64, SeededRng};

pub mod mock_server;

pub const REFERENCE_COUNT: usize = 4;
pub const BACKEND_URL_ENV: &str = "REEFFORGE_BACKEND_URL";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
pub const MOCK_BACKEND_ID: &str = "mock-v1";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis request: {0}")]
    Validation(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend error (status {status}): {message}")]
    Backend { status: u16, message: String },
}

impl SynthError {
    pub fn is_transient(&self) -> bool {
        match self {
            SynthError::Transport(_) => true,
            SynthError::Backend { status, .. } => matches!(status, 502..=504),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub positive: String,
    pub negative: String,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            positive: "underwater photograph of an oyster reef, oysters on a muddy seabed, natural light, turbid green water".into(),
            negative: "cartoon, painting, text, watermark, people, fish, blurry, oversaturated".into(),
        }
    }
}

/// Settings applied to every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub prompts: PromptConfig,
    pub denoise_strength: f64,
    pub max_depth_m: f64,
    pub depth_polarity: DepthPolarity,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            prompts: PromptConfig::default(),
            denoise_strength: 0.75,
            max_depth_m: 2.0,
            depth_polarity: DepthPolarity::NearBright,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisRequest {
    pub depth_png: Vec<u8>,
    pub mask_png: Vec<u8>,
    pub reference_images: Vec<Vec<u8>>,
    pub positive_prompt: String,
    pub negative_prompt: String,
    pub seed: u64,
    pub denoise_strength: f64,
    pub output_size: (u32, u32),
    pub scene_ref: String,
}

fn image_size(bytes: &[u8]) -> Result<(u32, u32), String> {
    ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| e.to_string())?
        .into_dimensions()
        .map_err(|e| e.to_string())
}

impl SynthesisRequest {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Validation(m));
        if self.reference_images.len() != REFERENCE_COUNT {
            return bad(format!(
                "expected {REFERENCE_COUNT} reference images, got {}",
                self.reference_images.len()
            ));
        }
        if !(0.0..=1.0).contains(&self.denoise_strength) {
            return bad(format!("denoise_strength {} outside [0, 1]", self.denoise_strength));
        }
        for (name, bytes) in [("depth", &self.depth_png), ("mask", &self.mask_png)] {
            let size = image_size(bytes).map_err(|e| SynthError::Validation(format!("{name}: {e}")))?;
            if size != self.output_size {
                return bad(format!(
                    "{name} is {}x{}, output_size is {}x{}",
                    size.0, size.1, self.output_size.0, self.output_size.1
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 over every field, each length-prefixed.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        let mut field = |b: &[u8]| {
            h.update((b.len() as u64).to_le_bytes());
            h.update(b);
        };
        field(&self.depth_png);
        field(&self.mask_png);
        for r in &self.reference_images {
            field(r);
        }
        field(self.positive_prompt.as_bytes());
        field(self.negative_prompt.as_bytes());
        field(&self.seed.to_le_bytes());
        field(&self.denoise_strength.to_bits().to_le_bytes());
        field(&self.output_size.0.to_le_bytes());
        field(&self.output_size.1.to_le_bytes());
        field(self.scene_ref.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn params_json(&self) -> serde_json::Value {
        serde_json::json!({
            "positive_prompt": self.positive_prompt,
            "negative_prompt": self.negative_prompt,
            "seed": self.seed,
            "denoise_strength": self.denoise_strength,
            "width": self.output_size.0,
            "height": self.output_size.1,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub image: Vec<u8>,
    pub request_digest: String,
    pub backend_id: String,
    pub elapsed_ms: f64,
    pub scene_ref: String,
}

/// Indices of the four references drawn from a pool of `pool_size`.
pub fn select_references(pool_size: usize, seed: u64) -> Result<Vec<usize>, SynthError> {
    if pool_size < REFERENCE_COUNT {
        return Err(SynthError::Validation(format!(
            "reference pool has {pool_size} images, need at least {REFERENCE_COUNT}"
        )));
    }
    Ok(SeededRng::stream(seed, "references", 0).choose_distinct(pool_size, REFERENCE_COUNT))
}

/// Builds a request from encoded depth and mask PNGs, loading only the four
/// selected references through `fetch`.
pub fn build_request_with<F>(
    depth_png: Vec<u8>,
    mask_png: Vec<u8>,
    scene_ref: &str,
    pool_size: usize,
    mut fetch: F,
    params: &SynthParams,
    seed: u64,
) -> Result<SynthesisRequest, SynthError>
where
    F: FnMut(usize) -> Result<Vec<u8>, SynthError>,
{
    let picks = select_references(pool_size, seed)?;
    let output_size = image_size(&depth_png).map_err(|e| SynthError::Validation(format!("depth: {e}")))?;
    let req = SynthesisRequest {
        depth_png,
        mask_png,
        reference_images: picks.into_iter().map(&mut fetch).collect::<Result<_, _>>()?,
        positive_prompt: params.prompts.positive.clone(),
        negative_prompt: params.prompts.negative.clone(),
        seed,
        denoise_strength: params.denoise_strength,
        output_size,
        scene_ref: scene_ref.to_string(),
    };
    req.validate()?;
    Ok(req)
}

/// Builds a request from encoded depth and mask PNGs and an in-memory pool.
pub fn build_request_encoded(
    depth_png: Vec<u8>,
    mask_png: Vec<u8>,
    scene_ref: &str,
    real_pool: &[Vec<u8>],
    params: &SynthParams,
    seed: u64,
) -> Result<SynthesisRequest, SynthError> {
    build_request_with(
        depth_png,
        mask_png,
        scene_ref,
        real_pool.len(),
        |i| Ok(real_pool[i].clone()),
        params,
        seed,
    )
}

pub fn build_request(
    render: &RenderOutput,
    real_pool: &[Vec<u8>],
    params: &SynthParams,
    seed: u64,
) -> Result<SynthesisRequest, SynthError> {
    let enc = |e: rasterizer::RenderError| SynthError::Validation(e.to_string());
    let depth = rasterizer::encode_depth_png(&render.depth, params.max_depth_m, params.depth_polarity).map_err(enc)?;
    let (mask, _) = rasterizer::encode_mask_png(&render.mask).map_err(enc)?;
    build_request_encoded(depth, mask, &render.scene_ref, real_pool, params, seed)
}

/// Raw reply from a backend before size checks.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub image: Vec<u8>,
    pub backend_id: String,
}

pub trait SynthesisBackend: Send + Sync {
    fn submit(&self, request: &SynthesisRequest) -> Result<BackendReply, SynthError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.pow(retry)
    }
}

/// Submits `request`, retrying transient failures with exponential
/// backoff, and checks the returned image size.
pub fn synthesize(
    request: &SynthesisRequest,
    backend: &dyn SynthesisBackend,
    policy: &RetryPolicy,
) -> Result<SynthesisResult, SynthError> {
    request.validate()?;
    let digest = request.digest();
    let start = Instant::now();
    let mut retry = 0;
    let reply = loop {
        match backend.submit(request) {
            Ok(r) => break r,
            Err(e) if e.is_transient() && retry < policy.max_retries => {
                std::thread::sleep(policy.delay(retry));
                retry += 1;
            }
            Err(e) => return Err(e),
        }
    };
    let size = image_size(&reply.image).map_err(|e| SynthError::Protocol(format!("unreadable image: {e}")))?;
    if size != request.output_size {
        return Err(SynthError::Protocol(format!(
            "backend returned {}x{}, requested {}x{}",
            size.0, size.1, request.output_size.0, request.output_size.1
        )));
    }
    Ok(SynthesisResult {
        image: reply.image,
        request_digest: digest,
        backend_id: reply.backend_id,
        elapsed_ms: start.elapsed().as_secs_f64() * 1000.0,
        scene_ref: request.scene_ref.clone(),
    })
}

/// HTTP implementation of the wire contract.
pub struct HttpBackend {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, SynthError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| SynthError::Transport(e.to_string()))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            client,
        })
    }

    pub fn url(&self) -> String {
        format!("{}/synthesize", self.base_url)
    }
}

fn part(bytes: &[u8], name: &str) -> reqwest::blocking::multipart::Part {
    let mime = match image::guess_format(bytes) {
        Ok(ImageFormat::Jpeg) => "image/jpeg",
        _ => "image/png",
    };
    reqwest::blocking::multipart::Part::bytes(bytes.to_vec())
        .file_name(name.to_string())
        .mime_str(mime)
        .expect("static mime type")
}

impl SynthesisBackend for HttpBackend {
    fn submit(&self, request: &SynthesisRequest) -> Result<BackendReply, SynthError> {
        let mut form = reqwest::blocking::multipart::Form::new()
            .part("depth", part(&request.depth_png, "depth.png"))
            .part("mask", part(&request.mask_png, "mask.png"));
        for (i, r) in request.reference_images.iter().enumerate() {
            form = form.part(format!("ref{i}"), part(r, &format!("ref{i}")));
        }
        form = form.text("params", request.params_json().to_string());
        let resp = self
            .client
            .post(self.url())
            .multipart(form)
            .send()
            .map_err(|e| SynthError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let backend_id = resp
            .headers()
            .get("X-Backend-Id")
            .and_then(|v| v.to_str().ok())
            .unwrap_or("unknown")
            .to_string();
        let body = resp.bytes().map_err(|e| SynthError::Transport(e.to_string()))?;
        if status != 200 {
            let message = serde_json::from_slice::<serde_json::Value>(&body)
                .ok()
                .and_then(|v| v.get("error").and_then(|e| e.as_str()).map(str::to_string))
                .unwrap_or_else(|| String::from_utf8_lossy(&body).into_owned());
            return Err(SynthError::Backend { status, message });
        }
        Ok(BackendReply {
            image: body.to_vec(),
            backend_id,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MockFault {
    #[default]
    None,
    /// Reply one pixel wider than requested.
    WrongSize,
    /// Fail with this HTTP status.
    Status(u16),
}

/// Deterministic stand-in for the synthesis service.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend {
    pub fault: MockFault,
}

const MOCK_WATER: [f64; 3] = [38.0, 66.0, 58.0];
const MOCK_FAR: [f64; 3] = [78.0, 88.0, 52.0];
const MOCK_NEAR: [f64; 3] = [156.0, 124.0, 82.0];
const NOISE_CELL: u32 = 32;
const NOISE_AMP: f64 = 14.0;

fn lattice(seed: u64, gx: u32, gy: u32) -> f64 {
    let h = splitmix64(seed ^ splitmix64(((gx as u64) << 32) | gy as u64));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn value_noise(seed: u64, x: u32, y: u32) -> f64 {
    let (gx, gy) = (x / NOISE_CELL, y / NOISE_CELL);
    let fx = (x % NOISE_CELL) as f64 / NOISE_CELL as f64;
    let fy = (y % NOISE_CELL) as f64 / NOISE_CELL as f64;
    let top = lattice(seed, gx, gy) * (1.0 - fx) + lattice(seed, gx + 1, gy) * fx;
    let bot = lattice(seed, gx, gy + 1) * (1.0 - fx) + lattice(seed, gx + 1, gy + 1) * fx;
    top * (1.0 - fy) + bot * fy
}

/// Colourises depth through a green-brown ramp, darkens instance borders and
/// adds seed-dependent low-frequency noise on foreground pixels.
pub fn mock_image(request: &SynthesisRequest) -> Result<RgbImage, SynthError> {
    let dec = |e: rasterizer::RenderError| SynthError::Validation(e.to_string());
    let (w, h, depth) = rasterizer::decode_png_gray16(&request.depth_png).map_err(dec)?;
    let mask = rasterizer::decode_mask_png(&request.mask_png).map_err(dec)?;
    if (mask.width, mask.height) != (w, h) {
        return Err(SynthError::Validation("depth and mask sizes differ".into()));
    }
    let noise_seed = splitmix64(request.seed);
    let mut img = RgbImage::new(w, h);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let i = (y * w + x) as usize;
        let id = mask.data[i];
        if id == 0 {
            px.0 = MOCK_WATER.map(|c| c as u8);
            continue;
        }
        let t = depth[i] as f64 / 65535.0;
        let border = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().any(|&(dx, dy)| {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            nx < 0
                || ny < 0
                || nx >= w as i64
                || ny >= h as i64
                || mask.data[(ny as u32 * w + nx as u32) as usize] != id
        });
        let shade = if border { 0.55 } else { 1.0 };
        let n = NOISE_AMP * value_noise(noise_seed, x, y);
        for c in 0..3 {
            let v = (MOCK_FAR[c] + (MOCK_NEAR[c] - MOCK_FAR[c]) * t) * shade + n;
            px.0[c] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(img)
}

impl SynthesisBackend for MockBackend {
    fn submit(&self, request: &SynthesisRequest) -> Result<BackendReply, SynthError> {
        if let MockFault::Status(status) = self.fault {
            return Err(SynthError::Backend {
                status,
                message: "injected failure".into(),
            });
        }
        let mut img = mock_image(request)?;
        if self.fault == MockFault::WrongSize {
            img = image::imageops::resize(&img, img.width() + 1, img.height(), image::imageops::FilterType::Nearest);
        }
        let image = rasterizer::encode_png_rgb(&img).map_err(|e| SynthError::Protocol(e.to_string()))?;
        Ok(BackendReply {
            image,
            backend_id: MOCK_BACKEND_ID.to_string(),
        })
    }
}
