//! Remote embedding client against a local mock server speaking the wire
//! protocol: POST {endpoint}/embed with {"texts": [...]}, JSON response
//! {"embeddings": [[f64,...] | null, ...]}, bearer auth from
//! EMBINVERT_API_KEY, refusals as nulls, transport errors as non-200.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use embleak_core::embedder::{EmbedError, Embedder, EmbedderConfig, EmbedOutcome};

/// Minimal HTTP server: answers each connection with `respond(body, req#)`.
struct MockServer {
    endpoint: String,
    hits: Arc<AtomicUsize>,
    last_auth: Arc<std::sync::Mutex<Option<String>>>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    fn start(
        respond: impl Fn(&str, usize) -> (u16, String) + Send + Sync + 'static,
    ) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let hits2 = hits.clone();
        let last_auth = Arc::new(std::sync::Mutex::new(None));
        let last_auth2 = last_auth.clone();
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let n = hits2.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).ok();
                if line.starts_with("SHUTDOWN") {
                    break;
                }
                let mut content_len = 0usize;
                loop {
                    let mut header = String::new();
                    if reader.read_line(&mut header).is_err() || header.trim().is_empty() {
                        break;
                    }
                    let lower = header.to_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        content_len = v.trim().parse().unwrap_or(0);
                    }
                    if lower.starts_with("authorization:") {
                        let raw = header.split_once(':').map_or("", |(_, v)| v).trim();
                        *last_auth2.lock().unwrap() = Some(raw.to_string());
                    }
                }
                let mut body = vec![0u8; content_len];
                reader.read_exact(&mut body).ok();
                let body = String::from_utf8_lossy(&body).to_string();
                let (status, reply) = respond(&body, n);
                let response = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                    reply.len()
                );
                stream.write_all(response.as_bytes()).ok();
            }
        });
        MockServer { endpoint: format!("http://{addr}"), hits, last_auth, handle: Some(handle) }
    }

    fn hit_count(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    fn last_auth(&self) -> Option<String> {
        self.last_auth.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        // unblock the accept loop
        if let Ok(mut s) = std::net::TcpStream::connect(self.endpoint.trim_start_matches("http://"))
        {
            s.write_all(b"SHUTDOWN\r\n").ok();
        }
        if let Some(h) = self.handle.take() {
            h.join().ok();
        }
    }
}

fn fast_remote(endpoint: &str, dim: usize) -> EmbedderConfig {
    EmbedderConfig {
        retry_backoff_ms: 1,
        ..EmbedderConfig::remote(endpoint, dim)
    }
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(|t| t.to_string()).collect()
}

#[test]
fn echoes_fixed_vectors() {
    let server = MockServer::start(|body, _| {
        let req: serde_json::Value = serde_json::from_str(body).unwrap();
        let n = req["texts"].as_array().unwrap().len();
        let vecs: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, 1.0, -1.0]).collect();
        (200, serde_json::json!({ "embeddings": vecs }).to_string())
    });
    let embedder = Embedder::new(fast_remote(&server.endpoint, 3)).unwrap();
    let out = embedder
        .remote_embed(&["first text".into(), "second text".into()])
        .unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out[0].vector().unwrap().values(), &[0.0, 1.0, -1.0]);
    assert_eq!(out[1].vector().unwrap().values(), &[1.0, 1.0, -1.0]);
}

#[test]
fn wrong_dimension_is_rejected() {
    let server = MockServer::start(|_, _| {
        (200, serde_json::json!({ "embeddings": [[1.0, 2.0]] }).to_string())
    });
    let embedder = Embedder::new(fast_remote(&server.endpoint, 3)).unwrap();
    let err = embedder.remote_embed(&["text".into()]).unwrap_err();
    assert!(matches!(err, EmbedError::DimensionMismatch { expected: 3, got: 2 }));
}

#[test]
fn refusal_status_maps_to_marker() {
    let server = MockServer::start(|body, _| {
        let req: serde_json::Value = serde_json::from_str(body).unwrap();
        // the mock refuses every first text and embeds the rest
        let entries: Vec<serde_json::Value> = req["texts"]
            .as_array()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, _)| {
                if i == 0 {
                    serde_json::Value::Null
                } else {
                    serde_json::json!([1.0, 0.0, 0.0])
                }
            })
            .collect();
        (200, serde_json::json!({ "embeddings": entries }).to_string())
    });
    let embedder = Embedder::new(fast_remote(&server.endpoint, 3)).unwrap();
    let out = embedder.remote_embed(&["hi".into(), "long enough".into()]).unwrap();
    assert_eq!(out[0], EmbedOutcome::Refused);
    assert!(matches!(out[1], EmbedOutcome::Vector(_)));

    // single-text embed() surfaces the refusal as an error
    let err = embedder.embed(&toks("hi")).unwrap_err();
    assert!(matches!(err, EmbedError::RefusedShortText { .. }));
}

#[test]
fn retries_then_succeeds() {
    let server = MockServer::start(|_, n| {
        if n == 0 {
            (500, "{}".to_string())
        } else {
            (200, serde_json::json!({ "embeddings": [[0.5, 0.5, 0.5]] }).to_string())
        }
    });
    let embedder = Embedder::new(fast_remote(&server.endpoint, 3)).unwrap();
    let out = embedder.remote_embed(&["text".into()]).unwrap();
    assert!(matches!(out[0], EmbedOutcome::Vector(_)));
    assert_eq!(server.hit_count(), 2);
}

#[test]
fn exhausted_retries_surface_remote_unavailable() {
    let server = MockServer::start(|_, _| (503, "{}".to_string()));
    let embedder = Embedder::new(fast_remote(&server.endpoint, 3)).unwrap();
    let err = embedder.remote_embed(&["text".into()]).unwrap_err();
    assert!(matches!(err, EmbedError::RemoteUnavailable(_)));
    assert_eq!(server.hit_count(), 3, "three attempts, then give up");
}

#[test]
fn batches_are_chunked_and_reassembled_in_order() {
    let server = MockServer::start(|body, _| {
        let req: serde_json::Value = serde_json::from_str(body).unwrap();
        let texts = req["texts"].as_array().unwrap();
        // derive each vector from the text's own index suffix
        let vecs: Vec<Vec<f64>> = texts
            .iter()
            .map(|t| {
                let idx: f64 =
                    t.as_str().unwrap().rsplit(' ').next().unwrap().parse().unwrap();
                vec![idx, 0.0, 0.0]
            })
            .collect();
        (200, serde_json::json!({ "embeddings": vecs }).to_string())
    });
    let mut cfg = fast_remote(&server.endpoint, 3);
    cfg.remote_batch_size = 4;
    cfg.concurrency = 3;
    let embedder = Embedder::new(cfg).unwrap();
    let texts: Vec<String> = (0..23).map(|i| format!("text {i}")).collect();
    let out = embedder.remote_embed(&texts).unwrap();
    assert_eq!(out.len(), 23);
    for (i, o) in out.iter().enumerate() {
        assert_eq!(o.vector().unwrap().values()[0], i as f64, "order preserved at {i}");
    }
    assert!(server.hit_count() >= 6, "23 texts in chunks of 4");
}

#[test]
fn bearer_token_is_sent_from_env() {
    // the only test touching the var, so no cross-test interference
    std::env::set_var("EMBINVERT_API_KEY", "sekrit-123");
    let server = MockServer::start(|_, _| {
        (200, serde_json::json!({ "embeddings": [[0.0, 0.0, 0.0]] }).to_string())
    });
    let embedder = Embedder::new(fast_remote(&server.endpoint, 3)).unwrap();
    embedder.remote_embed(&["text".into()]).unwrap();
    std::env::remove_var("EMBINVERT_API_KEY");
    assert_eq!(server.last_auth().as_deref(), Some("Bearer sekrit-123"));
}
