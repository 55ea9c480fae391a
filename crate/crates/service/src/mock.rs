//! A local chat-completions responder for tests and dry runs.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use medq_core::model::option_label;
use medq_core::{render_prompt, Manifest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

#[derive(Debug, Clone)]
pub enum MockMode {
    /// Answers from a prompt → label key; unknown prompts get "A".
    Correct(HashMap<String, String>),
    /// A uniformly random valid label, from a seeded stream.
    UniformRandom { seed: u64 },
    /// Replies cycle through the script, one entry per request.
    Scripted(Vec<String>),
    /// Never answers within any sensible client timeout.
    Timeout,
    /// Every request gets HTTP 401.
    AuthFail,
    /// HTTP 200 with a body that is not a chat completion.
    Malformed,
    /// The first `n` requests get HTTP 500, later ones go to `then`.
    FailFirst { n: usize, then: Box<MockMode> },
}

impl MockMode {
    /// Key for [`MockMode::Correct`] covering every sample in `manifest`.
    pub fn answer_key(manifest: &Manifest) -> medq_core::Result<HashMap<String, String>> {
        manifest
            .samples
            .iter()
            .map(|s| Ok((render_prompt(&s.pair())?, s.answer.clone())))
            .collect()
    }

    pub fn parse(name: &str, seed: u64) -> Option<Self> {
        Some(match name {
            "uniform" | "uniform-random" => MockMode::UniformRandom { seed },
            "timeout" => MockMode::Timeout,
            "auth-fail" => MockMode::AuthFail,
            "malformed" => MockMode::Malformed,
            s if s.starts_with("scripted:") => {
                MockMode::Scripted(s["scripted:".len()..].split(',').map(str::to_string).collect())
            }
            _ => return None,
        })
    }
}

/// What the mock saw for one request.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedRequest {
    pub model: String,
    pub temperature: f64,
    pub prompt: String,
    pub image_url: String,
}

struct MockState {
    mode: MockMode,
    rng: Mutex<ChaCha8Rng>,
    count: Mutex<usize>,
    log: Mutex<Vec<LoggedRequest>>,
}

/// Number of option lines ("A. ...") in a rendered prompt.
fn option_count(prompt: &str) -> usize {
    prompt
        .lines()
        .filter(|l| {
            let b = l.as_bytes();
            b.len() >= 2 && b[0].is_ascii_uppercase() && b[1] == b'.'
        })
        .count()
}

fn completion(text: &str) -> Response {
    Json(json!({
        "id": "mock",
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": text},
            "finish_reason": "stop",
        }],
    }))
    .into_response()
}

fn reply(state: &MockState, mode: &MockMode, n: usize, prompt: &str) -> Response {
    match mode {
        MockMode::Correct(key) => completion(key.get(prompt).map_or("A", String::as_str)),
        MockMode::UniformRandom { .. } => {
            let k = option_count(prompt).max(2);
            let i = state.rng.lock().expect("rng lock").random_range(0..k);
            completion(&option_label(i).to_string())
        }
        MockMode::Scripted(script) if !script.is_empty() => completion(&script[n % script.len()]),
        MockMode::Scripted(_) => completion(""),
        MockMode::AuthFail => (StatusCode::UNAUTHORIZED, "invalid api key").into_response(),
        MockMode::Malformed => Json(json!({"unexpected": true})).into_response(),
        MockMode::FailFirst { n: fails, then } => {
            if n < *fails {
                (StatusCode::INTERNAL_SERVER_ERROR, "try again").into_response()
            } else {
                reply(state, then, n - fails, prompt)
            }
        }
        MockMode::Timeout => unreachable!("handled before dispatch"),
    }
}

async fn handle(State(state): State<Arc<MockState>>, Json(body): Json<Value>) -> Response {
    let content = body.pointer("/messages/0/content");
    let part = |kind: &str, ptr: &str| {
        content
            .and_then(Value::as_array)
            .and_then(|parts| parts.iter().find(|p| p["type"] == kind))
            .and_then(|p| p.pointer(ptr))
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string()
    };
    let logged = LoggedRequest {
        model: body["model"].as_str().unwrap_or_default().to_string(),
        temperature: body["temperature"].as_f64().unwrap_or(f64::NAN),
        prompt: part("text", "/text"),
        image_url: part("image_url", "/image_url/url"),
    };
    let prompt = logged.prompt.clone();
    state.log.lock().expect("log lock").push(logged);
    let n = {
        let mut c = state.count.lock().expect("count lock");
        *c += 1;
        *c - 1
    };
    if matches!(state.mode, MockMode::Timeout) {
        tokio::time::sleep(Duration::from_secs(3600)).await;
    }
    reply(&state, &state.mode, n, &prompt)
}

pub fn router(mode: MockMode) -> (Router, MockHandleState) {
    let seed = match &mode {
        MockMode::UniformRandom { seed } => *seed,
        _ => 0,
    };
    let state = Arc::new(MockState {
        rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        mode,
        count: Mutex::new(0),
        log: Mutex::new(Vec::new()),
    });
    let app = Router::new()
        .route("/chat/completions", post(handle))
        .route("/v1/chat/completions", post(handle))
        .with_state(state.clone());
    (app, MockHandleState(state))
}

/// Read access to a running mock's request log.
#[derive(Clone)]
pub struct MockHandleState(Arc<MockState>);

impl MockHandleState {
    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.0.log.lock().expect("log lock").clone()
    }

    pub fn clear(&self) {
        self.0.log.lock().expect("log lock").clear();
    }
}

pub struct MockServer {
    pub addr: SocketAddr,
    pub state: MockHandleState,
    task: JoinHandle<()>,
}

impl MockServer {
    /// Binds `addr` (port 0 picks a free port) and serves in the background.
    pub async fn start(mode: MockMode, addr: SocketAddr) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let (app, state) = router(mode);
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(Self { addr, state, task })
    }

    pub async fn local(mode: MockMode) -> std::io::Result<Self> {
        Self::start(mode, SocketAddr::from(([127, 0, 0, 1], 0))).await
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.state.requests()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_option_lines() {
        let p = "Q?\n\nA. one\nB. two\nC. three\n\nConstraint: x\nAnswer:";
        assert_eq!(option_count(p), 3);
    }

    #[test]
    fn mode_names() {
        assert!(matches!(MockMode::parse("timeout", 0), Some(MockMode::Timeout)));
        match MockMode::parse("scripted:A,A,B", 0) {
            Some(MockMode::Scripted(s)) => assert_eq!(s, ["A", "A", "B"]),
            other => panic!("{other:?}"),
        }
        assert!(MockMode::parse("nope", 0).is_none());
    }
}
