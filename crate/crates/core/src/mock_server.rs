//! Reference HTTP server for the three service protocols (`/complete`,
//! `/embed`, `/rescore`), backed by the deterministic mocks. Used by the
//! integration tests and handy for exercising a deployment offline.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::corpus::Passage;
use crate::providers::mock::{heuristic_completion, HashEmbedder};
use crate::providers::CompletionRequest;
use crate::rerank::{fallback_score, RerankRequest};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RescoreBehavior {
    /// Every document gets the same score.
    Constant(f64),
    /// `ln(max(overlap, 1e-6))` of the token-overlap fallback score.
    LogOverlap,
    /// Returns one score fewer than requested.
    DropLast,
}

#[derive(Debug, Clone)]
pub struct MockServerConfig {
    pub rescore: RescoreBehavior,
    /// Answer this many requests (any route) with HTTP 503 first.
    pub fail_first: usize,
    pub embed_dimension: usize,
    /// When set, requests must carry `Authorization: Bearer <key>`.
    pub required_key: Option<String>,
}

impl Default for MockServerConfig {
    fn default() -> Self {
        Self { rescore: RescoreBehavior::LogOverlap, fail_first: 0, embed_dimension: 32, required_key: None }
    }
}

struct State {
    config: MockServerConfig,
    embedder: HashEmbedder,
    served: AtomicUsize,
    per_route: Mutex<HashMap<String, usize>>,
    rescore_batches: Mutex<Vec<Vec<String>>>,
}

pub struct MockServer {
    url: String,
    server: Arc<tiny_http::Server>,
    state: Arc<State>,
    worker: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(config: MockServerConfig) -> std::io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("mock server has no IP address"))?;
        let server = Arc::new(server);
        let state = Arc::new(State {
            embedder: HashEmbedder::new(config.embed_dimension),
            config,
            served: AtomicUsize::new(0),
            per_route: Mutex::default(),
            rescore_batches: Mutex::default(),
        });
        let worker = {
            let server = Arc::clone(&server);
            let state = Arc::clone(&state);
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    handle(&state, request);
                }
            })
        };
        Ok(Self { url: format!("http://{addr}"), server, state, worker: Some(worker) })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Requests received on `route` (e.g. `"/rescore"`), including failures.
    pub fn requests(&self, route: &str) -> usize {
        self.state.per_route.lock().unwrap().get(route).copied().unwrap_or(0)
    }

    /// Document ids of every `/rescore` batch that was answered, in order.
    pub fn rescore_batches(&self) -> Vec<Vec<String>> {
        self.state.rescore_batches.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn respond(request: tiny_http::Request, status: u16, body: Value) {
    let header = tiny_http::Header::from_bytes("Content-Type", "application/json; charset=utf-8")
        .expect("static header");
    let response = tiny_http::Response::from_string(body.to_string())
        .with_status_code(status)
        .with_header(header);
    let _ = request.respond(response);
}

fn handle(state: &State, mut request: tiny_http::Request) {
    let route = request.url().to_string();
    *state.per_route.lock().unwrap().entry(route.clone()).or_default() += 1;
    if state.served.fetch_add(1, Ordering::SeqCst) < state.config.fail_first {
        return respond(request, 503, json!({"error": "warming up"}));
    }
    if let Some(key) = &state.config.required_key {
        let expected = format!("Bearer {key}");
        let ok = request
            .headers()
            .iter()
            .any(|h| h.field.equiv("Authorization") && h.value.as_str() == expected);
        if !ok {
            return respond(request, 401, json!({"error": "unauthorized"}));
        }
    }
    if request.method() != &tiny_http::Method::Post {
        return respond(request, 405, json!({"error": "POST only"}));
    }
    let mut body = String::new();
    if request.as_reader().read_to_string(&mut body).is_err() {
        return respond(request, 400, json!({"error": "body is not UTF-8"}));
    }
    let result = match route.as_str() {
        "/complete" => complete(&body),
        "/embed" => embed(state, &body),
        "/rescore" => rescore(state, &body),
        _ => return respond(request, 404, json!({"error": "unknown route"})),
    };
    match result {
        Ok(value) => respond(request, 200, value),
        Err(message) => respond(request, 400, json!({ "error": message })),
    }
}

fn parse<'a, T: Deserialize<'a>>(body: &'a str) -> Result<T, String> {
    serde_json::from_str(body).map_err(|e| e.to_string())
}

fn complete(body: &str) -> Result<Value, String> {
    let request: CompletionRequest = parse(body)?;
    let text = request.apply_stop(&heuristic_completion(&request.prompt));
    Ok(json!({ "text": text }))
}

fn embed(state: &State, body: &str) -> Result<Value, String> {
    #[derive(Deserialize)]
    struct Embed {
        texts: Vec<String>,
    }
    let request: Embed = parse(body)?;
    let vectors: Vec<Vec<f64>> = request.texts.iter().map(|t| state.embedder.vector(t)).collect();
    Ok(json!({ "vectors": vectors }))
}

fn rescore(state: &State, body: &str) -> Result<Value, String> {
    let request: RerankRequest = parse(body)?;
    state
        .rescore_batches
        .lock()
        .unwrap()
        .push(request.candidates.iter().map(|c| c.id.clone()).collect());
    let mut scores: Vec<f64> = request
        .candidates
        .iter()
        .map(|c| match state.config.rescore {
            RescoreBehavior::Constant(s) => s,
            RescoreBehavior::LogOverlap | RescoreBehavior::DropLast => {
                let p = Passage {
                    id: c.id.clone(),
                    article_id: c.id.clone(),
                    title: c.title.clone(),
                    text: c.text.clone(),
                    window_index: 0,
                };
                fallback_score(&request.query, &p).max(1e-6).ln()
            }
        })
        .collect();
    if state.config.rescore == RescoreBehavior::DropLast {
        scores.pop();
    }
    Ok(json!({ "scores": scores }))
}
