//! A local stand-in for the messages endpoint.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use sociex::llm::{LlmSettings, Provider};

/// Decides the reply for a request body and its arrival index.
pub type Responder = dyn Fn(&Value, u64) -> (u16, Value) + Send + Sync;

#[derive(Default)]
pub struct Stats {
    pub requests: AtomicU64,
    pub malformed: AtomicU64,
    /// Requests carrying a "your previous reply could not be used" follow-up.
    pub retries: AtomicU64,
    pub api_keys: Mutex<Vec<String>>,
}

struct Shared {
    respond: Box<Responder>,
    stats: Arc<Stats>,
}

pub struct MockLlm {
    pub url: String,
    pub stats: Arc<Stats>,
}

impl MockLlm {
    pub fn start(respond: impl Fn(&Value, u64) -> (u16, Value) + Send + Sync + 'static) -> Self {
        let stats = Arc::new(Stats::default());
        let shared = Arc::new(Shared { respond: Box::new(respond), stats: stats.clone() });
        let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
        thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
            rt.block_on(async move {
                let app = Router::new().route("/v1/messages", post(handle)).with_state(shared);
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app).await.unwrap();
            });
        });
        let addr = rx.recv().unwrap();
        MockLlm { url: format!("http://{addr}/v1/messages"), stats }
    }

    /// Settings pointing at this mock, reading the key from `key_var`.
    pub fn settings(&self, key_var: &str) -> LlmSettings {
        LlmSettings {
            endpoint_url: self.url.clone(),
            api_key_env_var: key_var.to_string(),
            provider: Provider::Anthropic,
            request_timeout_secs: 5,
            max_retries: 3,
            retry_base_delay_ms: 1,
            max_in_flight: 4,
            ..LlmSettings::default()
        }
    }
}

async fn handle(State(s): State<Arc<Shared>>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n = s.stats.requests.fetch_add(1, Ordering::SeqCst);
    if let Some(k) = headers.get("x-api-key").and_then(|v| v.to_str().ok()) {
        s.stats.api_keys.lock().unwrap().push(k.to_string());
    }
    if body.to_string().contains("could not be used") {
        s.stats.retries.fetch_add(1, Ordering::SeqCst);
    }
    let (status, reply) = (s.respond)(&body, n);
    if reply.to_string().contains(MALFORMED) {
        s.stats.malformed.fetch_add(1, Ordering::SeqCst);
    }
    (StatusCode::from_u16(status).unwrap(), Json(reply))
}

pub const MALFORMED: &str = "Let me think about that for a moment.";

pub fn text_reply(text: &str) -> Value {
    json!({
        "content": [{ "type": "text", "text": text }],
        "usage": { "input_tokens": 100, "output_tokens": 20 },
    })
}

/// One decision block every decision kind accepts: speak but pass, send
/// nothing, keep affinity, and a short belief state.
pub fn universal_reply() -> Value {
    text_reply(
        "Happy to keep talking.\n```decision\n{\"continue\": true, \"actions\": [], \"allocations\": {}, \
         \"affinity\": {}, \"beliefs\": \"Everyone is cooperative.\", \"desires\": \"More triples.\", \
         \"intentions\": \"Keep trading fairly.\"}\n```",
    )
}

/// Deterministic in the request content: about one request in `every` gets
/// a reply with no decision block.
pub fn draws_malformed(body: &Value, every: u64) -> bool {
    let mut h = DefaultHasher::new();
    body.to_string().hash(&mut h);
    h.finish().is_multiple_of(every)
}
