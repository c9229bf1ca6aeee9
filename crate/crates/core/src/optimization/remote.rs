//! Client for the remote embedding-loss service.
//!
//! Request body (little-endian): `version u32 | prompt_len u32 | prompt utf-8
//! | n u32 | h u32 | w u32 | n*h*w*3 f32` with pixels image-major, row-major,
//! RGB interleaved. Response body: `version u32 | loss f32 | grads f32` in
//! the same order as the request pixels.

use std::io::Read;
use std::thread;
use std::time::Duration;

use log::warn;
use thiserror::Error;

use super::loss::{LossError, LossOutput, LossProvider};
use crate::diff::Rgb;
use crate::imageio::Image;

pub const PROTOCOL_VERSION: u32 = 1;
pub const LOSS_PATH: &str = "/v1/loss";
pub const ECHO_PATH: &str = "/v1/echo";

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("connection failed: {0}")]
    Transport(String),
    #[error("service rejected protocol version {PROTOCOL_VERSION}")]
    VersionMismatch,
    #[error("service returned HTTP {code}: {message}")]
    Status { code: u16, message: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("service returned non-finite values")]
    NonFinite,
}

impl RemoteError {
    fn retryable(&self) -> bool {
        match self {
            RemoteError::Transport(_) => true,
            RemoteError::Status { code, .. } => *code >= 500,
            _ => false,
        }
    }
}

pub fn encode_request(prompt: &str, images: &[Image]) -> Result<Vec<u8>, LossError> {
    let (h, w) = match images.first() {
        Some(i) => (i.height(), i.width()),
        None => (0, 0),
    };
    if images.iter().any(|i| (i.height(), i.width()) != (h, w)) {
        return Err(LossError::Shape("batch images differ in size".into()));
    }
    let mut out = Vec::with_capacity(24 + prompt.len() + images.len() * h * w * 12);
    out.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
    out.extend_from_slice(&(prompt.len() as u32).to_le_bytes());
    out.extend_from_slice(prompt.as_bytes());
    for v in [images.len(), h, w] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for img in images {
        for p in img.pixels() {
            for v in p.to_array() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Loss and flat gradients exactly as sent by the service.
#[derive(Clone, Debug, PartialEq)]
pub struct RawResponse {
    pub loss: f32,
    pub grads: Vec<f32>,
}

pub fn decode_response(body: &[u8], expected: usize) -> Result<RawResponse, RemoteError> {
    if body.len() < 8 {
        return Err(RemoteError::Protocol(format!("{}-byte body", body.len())));
    }
    let version = u32::from_le_bytes(body[..4].try_into().expect("4 bytes"));
    if version != PROTOCOL_VERSION {
        return Err(RemoteError::VersionMismatch);
    }
    let loss = f32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
    let rest = &body[8..];
    if rest.len() != expected * 4 {
        return Err(RemoteError::Protocol(format!(
            "expected {expected} gradient values, got {} bytes",
            rest.len()
        )));
    }
    let grads: Vec<f32> = rest
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(RemoteError::NonFinite);
    }
    Ok(RawResponse { loss, grads })
}

#[derive(Clone, Debug)]
pub struct RemoteClient {
    agent: ureq::Agent,
    base_url: String,
    retries: u32,
    backoff: Duration,
}

impl RemoteClient {
    pub fn new(endpoint: &str) -> Self {
        Self {
            agent: ureq::AgentBuilder::new()
                .timeout_connect(Duration::from_secs(10))
                .timeout(Duration::from_secs(300))
                .build(),
            base_url: endpoint.trim_end_matches('/').to_string(),
            retries: 3,
            backoff: Duration::from_millis(200),
        }
    }

    /// Retries apply to transport failures and 5xx responses only.
    pub fn with_retries(mut self, retries: u32, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }

    fn post_once(&self, url: &str, body: &[u8]) -> Result<Vec<u8>, RemoteError> {
        let resp = self
            .agent
            .post(url)
            .set("Content-Type", "application/octet-stream")
            .send_bytes(body);
        match resp {
            Ok(r) => {
                let mut buf = Vec::new();
                r.into_reader()
                    .read_to_end(&mut buf)
                    .map_err(|e| RemoteError::Transport(e.to_string()))?;
                Ok(buf)
            }
            Err(ureq::Error::Status(409, _)) => Err(RemoteError::VersionMismatch),
            Err(ureq::Error::Status(code, r)) => Err(RemoteError::Status {
                code,
                message: r.into_string().unwrap_or_default().chars().take(200).collect(),
            }),
            Err(ureq::Error::Transport(t)) => Err(RemoteError::Transport(t.to_string())),
        }
    }

    /// Sends `images` to `path` and returns the raw response.
    pub fn call(&self, path: &str, prompt: &str, images: &[Image]) -> Result<RawResponse, LossError> {
        let body = encode_request(prompt, images)?;
        let expected: usize = images.iter().map(|i| i.pixels().len() * 3).sum();
        let url = format!("{}{}", self.base_url, path);
        let mut attempt = 0;
        loop {
            let result = self.post_once(&url, &body).and_then(|b| decode_response(&b, expected));
            match result {
                Ok(r) => return Ok(r),
                Err(e) if e.retryable() && attempt < self.retries => {
                    attempt += 1;
                    warn!("remote loss attempt {attempt} failed ({e}); retrying");
                    thread::sleep(self.backoff * attempt);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn loss(&self, prompt: &str, images: &[Image]) -> Result<LossOutput, LossError> {
        Ok(to_output(self.call(LOSS_PATH, prompt, images)?, images))
    }

    pub fn echo(&self, images: &[Image]) -> Result<LossOutput, LossError> {
        Ok(to_output(self.call(ECHO_PATH, "", images)?, images))
    }
}

fn to_output(raw: RawResponse, images: &[Image]) -> LossOutput {
    let mut it = raw.grads.chunks_exact(3);
    let grads = images
        .iter()
        .map(|img| {
            let px = (0..img.pixels().len())
                .map(|_| {
                    let g = it.next().expect("length checked on decode");
                    Rgb::new(g[0] as f64, g[1] as f64, g[2] as f64)
                })
                .collect();
            Image::from_pixels(img.width(), img.height(), px)
        })
        .collect();
    LossOutput {
        loss: raw.loss as f64,
        grads,
    }
}

pub fn remote_embedding_loss(client: &RemoteClient, prompt: &str, images: &[Image]) -> Result<LossOutput, LossError> {
    client.loss(prompt, images)
}

/// [`LossProvider`] backed by the remote service and a fixed prompt.
pub struct RemoteEmbeddingLoss {
    pub client: RemoteClient,
    pub prompt: String,
}

impl LossProvider for RemoteEmbeddingLoss {
    fn evaluate(&mut self, images: &[Image]) -> Result<LossOutput, LossError> {
        self.client.loss(&self.prompt, images)
    }
}
