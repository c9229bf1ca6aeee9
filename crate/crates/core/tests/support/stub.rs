//! In-process stand-in for the embedding-loss service. Both endpoints answer
//! in echo mode: loss = mean pixel value, gradient = 1/N everywhere.
#![allow(dead_code)]

use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use tiny_http::{Response, Server};

#[derive(Default)]
struct State {
    last_pixels: Vec<f32>,
    last_prompt: String,
    requests: usize,
    /// Statuses returned, in order, before requests are served normally.
    failures: Vec<u16>,
    version: u32,
}

pub struct StubServer {
    server: Arc<Server>,
    state: Arc<Mutex<State>>,
    worker: Option<JoinHandle<()>>,
}

fn u32_at(b: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_le_bytes(b.get(at..at + 4)?.try_into().ok()?))
}

/// Returns (status, body) for one request body.
fn answer(body: &[u8], state: &mut State) -> (u16, Vec<u8>) {
    let Some(version) = u32_at(body, 0) else { return (400, b"short body".to_vec()) };
    if version != 1 {
        return (409, b"unsupported version".to_vec());
    }
    let Some(plen) = u32_at(body, 4) else { return (400, b"short body".to_vec()) };
    let mut at = 8 + plen as usize;
    let Some(prompt) = body.get(8..at) else { return (400, b"short prompt".to_vec()) };
    state.last_prompt = String::from_utf8_lossy(prompt).into_owned();
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let Some(v) = u32_at(body, at) else { return (400, b"short header".to_vec()) };
        *d = v as usize;
        at += 4;
    }
    let count = dims[0] * dims[1] * dims[2] * 3;
    let pixels = &body[at..];
    if pixels.len() != count * 4 {
        return (400, b"pixel count mismatch".to_vec());
    }
    let values: Vec<f32> = pixels
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let loss = (values.iter().map(|&v| v as f64).sum::<f64>() / count as f64) as f32;
    let grad = (1.0 / count as f64) as f32;
    state.last_pixels = values;
    let mut out = Vec::with_capacity(8 + count * 4);
    out.extend_from_slice(&state.version.to_le_bytes());
    out.extend_from_slice(&loss.to_le_bytes());
    for _ in 0..count {
        out.extend_from_slice(&grad.to_le_bytes());
    }
    (200, out)
}

impl StubServer {
    pub fn start() -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind stub server"));
        let state = Arc::new(Mutex::new(State {
            version: 1,
            ..Default::default()
        }));
        let (srv, st) = (Arc::clone(&server), Arc::clone(&state));
        let worker = std::thread::spawn(move || {
            for mut request in srv.incoming_requests() {
                let mut body = Vec::new();
                let _ = request.as_reader().read_to_end(&mut body);
                let (status, reply) = {
                    let mut s = st.lock().unwrap();
                    s.requests += 1;
                    let known = matches!(request.url(), "/v1/echo" | "/v1/loss");
                    if !s.failures.is_empty() {
                        (s.failures.remove(0), b"injected failure".to_vec())
                    } else if !known {
                        (404, b"no such endpoint".to_vec())
                    } else {
                        answer(&body, &mut s)
                    }
                };
                let _ = request.respond(Response::from_data(reply).with_status_code(status));
            }
        });
        Self {
            server,
            state,
            worker: Some(worker),
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.server.server_addr().to_ip().expect("tcp listener"))
    }

    pub fn last_pixels(&self) -> Vec<f32> {
        self.state.lock().unwrap().last_pixels.clone()
    }

    pub fn last_prompt(&self) -> String {
        self.state.lock().unwrap().last_prompt.clone()
    }

    pub fn requests(&self) -> usize {
        self.state.lock().unwrap().requests
    }

    pub fn fail_next(&self, statuses: &[u16]) {
        self.state.lock().unwrap().failures.extend_from_slice(statuses);
    }

    /// Version stamped on successful responses.
    pub fn respond_with_version(&self, version: u32) {
        self.state.lock().unwrap().version = version;
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
