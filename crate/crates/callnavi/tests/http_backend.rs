//! HTTP backend behavior against a minimal in-process chat endpoint:
//! success path, retry with backoff on transient failures, and immediate
//! failure on authentication errors.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use callnavi::backends::{
    BackendError, CompletionOptions, HttpBackend, HttpEndpointConfig, ModelBackend,
};
use callnavi::dataset::Message;

/// Serve a fixed sequence of HTTP responses, one per connection, on an
/// ephemeral local port. Returns the base URL and a counter of requests.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base_url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&hits);
    std::thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = match listener.accept() {
                Ok(conn) => conn,
                Err(_) => return,
            };
            counter.fetch_add(1, Ordering::SeqCst);
            // Drain the request headers and body enough to respond.
            let mut buf = [0u8; 8192];
            let _ = stream.read(&mut buf);
            let reason = match status {
                200 => "OK",
                401 => "Unauthorized",
                429 => "Too Many Requests",
                _ => "Error",
            };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (base_url, hits)
}

fn ok_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

fn config(base_url: String, max_retries: usize) -> HttpEndpointConfig {
    HttpEndpointConfig {
        base_url,
        path: "/v1/chat/completions".into(),
        model: "test-model".into(),
        api_key_env: None,
        headers: Vec::new(),
        timeout_secs: 5,
        max_retries,
        initial_backoff_ms: 1,
    }
}

#[test]
fn success_returns_first_choice_content() {
    let (base_url, hits) = serve(vec![(200, ok_body("hello plan"))]);
    let backend = HttpBackend::new(config(base_url, 0)).unwrap();
    let reply = backend
        .complete(&[Message::user("hi")], &CompletionOptions::default())
        .unwrap();
    assert_eq!(reply, "hello plan");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn transient_server_error_is_retried() {
    let (base_url, hits) = serve(vec![
        (500, "{}".into()),
        (500, "{}".into()),
        (200, ok_body("eventually")),
    ]);
    let backend = HttpBackend::new(config(base_url, 3)).unwrap();
    let reply = backend
        .complete(&[Message::user("hi")], &CompletionOptions::default())
        .unwrap();
    assert_eq!(reply, "eventually");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    assert_eq!(backend.retries_used(), 2);
}

#[test]
fn rate_limit_exhausts_retry_budget() {
    let (base_url, hits) = serve(vec![(429, "{}".into()); 3]);
    let backend = HttpBackend::new(config(base_url, 2)).unwrap();
    let err = backend
        .complete(&[Message::user("hi")], &CompletionOptions::default())
        .unwrap_err();
    assert!(matches!(err, BackendError::RateLimited { attempts: 3 }), "{err:?}");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn auth_failure_is_not_retried() {
    let (base_url, hits) = serve(vec![(401, "{}".into()), (200, ok_body("never"))]);
    let backend = HttpBackend::new(config(base_url, 5)).unwrap();
    let err = backend
        .complete(&[Message::user("hi")], &CompletionOptions::default())
        .unwrap_err();
    assert!(matches!(err, BackendError::Auth(_)), "{err:?}");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_body_is_reported() {
    let (base_url, _) = serve(vec![(200, "not json at all".into())]);
    let backend = HttpBackend::new(config(base_url, 0)).unwrap();
    let err = backend
        .complete(&[Message::user("hi")], &CompletionOptions::default())
        .unwrap_err();
    assert!(matches!(err, BackendError::MalformedResponse(_)), "{err:?}");
}

#[test]
fn missing_credential_env_is_an_error() {
    let mut cfg = config("http://127.0.0.1:1".into(), 0);
    cfg.api_key_env = Some("CALLNAVI_NO_SUCH_KEY_VAR".into());
    assert!(matches!(
        HttpBackend::new(cfg),
        Err(BackendError::MissingCredential(var)) if var == "CALLNAVI_NO_SUCH_KEY_VAR"
    ));
}
