//! The remote client against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde_json::Value;

use stt_core::gateway::{
    Backend, BackendConfig, BackendKind, CallContext, Gateway, GatewayError, GenerationRequest, RemoteBackend,
};

#[derive(Debug, Clone)]
struct Seen {
    request_line: String,
    headers: Vec<(String, String)>,
    body: Value,
}

impl Seen {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

struct Reply {
    status: u16,
    headers: Vec<(&'static str, String)>,
    body: String,
}

fn ok(text: &str, finish_reason: &str) -> Reply {
    Reply {
        status: 200,
        headers: vec![],
        body: serde_json::json!({"choices": [{"text": text, "finish_reason": finish_reason}]}).to_string(),
    }
}

fn status(code: u16) -> Reply {
    Reply {
        status: code,
        headers: vec![],
        body: "{\"error\": \"scripted\"}".into(),
    }
}

/// Answers one connection per scripted reply, then stops.
fn serve(replies: Vec<Reply>) -> (String, Arc<Mutex<Vec<Seen>>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = std::thread::spawn(move || {
        for reply in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                .map(|(_, v)| v.parse().unwrap())
                .unwrap_or(0);
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Seen {
                request_line: request_line.trim_end().to_string(),
                headers,
                body: serde_json::from_slice(&body).unwrap(),
            });
            let mut out = stream;
            let mut head = format!(
                "HTTP/1.1 {} Scripted\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
                reply.status,
                reply.body.len()
            );
            for (k, v) in &reply.headers {
                head.push_str(&format!("{k}: {v}\r\n"));
            }
            head.push_str("\r\n");
            out.write_all(head.as_bytes()).unwrap();
            out.write_all(reply.body.as_bytes()).unwrap();
            out.flush().unwrap();
        }
    });
    (endpoint, seen, handle)
}

fn backend(endpoint: &str, token: Option<&str>, max_retries: u32) -> RemoteBackend {
    RemoteBackend::new(
        endpoint,
        "test-model",
        token.map(str::to_string),
        Duration::from_secs(5),
        max_retries,
        Duration::from_millis(10),
    )
    .unwrap()
}

fn request() -> GenerationRequest {
    GenerationRequest::new("en: `Hi`\nde: `", 32, vec!["`".into()]).unwrap()
}

const FIRST: CallContext = CallContext { ordinal: 0 };

#[test]
fn sends_the_completion_body_and_bearer_token() {
    let (endpoint, seen, handle) = serve(vec![ok("Hallo", "stop")]);
    let response = backend(&endpoint, Some("sk-test-123"), 0)
        .complete(&request(), FIRST)
        .unwrap();
    handle.join().unwrap();
    assert_eq!(response.text, "Hallo");
    assert!(response.terminated_by_stop);
    let seen = seen.lock().unwrap();
    let call = &seen[0];
    assert_eq!(call.request_line, "POST /v1/completions HTTP/1.1");
    assert_eq!(call.header("authorization"), Some("Bearer sk-test-123"));
    assert_eq!(call.body["model"], "test-model");
    assert_eq!(call.body["prompt"], "en: `Hi`\nde: `");
    assert_eq!(call.body["max_tokens"], 32);
    assert_eq!(call.body["stop"], serde_json::json!(["`"]));
    assert_eq!(call.body["temperature"], 0.0);
}

#[test]
fn length_finish_is_not_a_stop_and_echoed_stops_are_cut() {
    let (endpoint, _, handle) = serve(vec![ok("Hallo Welt und", "length"), ok("Hallo` extra", "length")]);
    let b = backend(&endpoint, None, 0);
    let cut_short = b.complete(&request(), FIRST).unwrap();
    assert!(!cut_short.terminated_by_stop);
    assert_eq!(cut_short.raw_finish_reason, "length");
    let echoed = b.complete(&request(), FIRST).unwrap();
    handle.join().unwrap();
    assert_eq!(echoed.text, "Hallo");
    assert!(echoed.terminated_by_stop);
}

#[test]
fn server_errors_are_retried() {
    let (endpoint, seen, handle) = serve(vec![status(500), status(503), ok("Hallo", "stop")]);
    let b = backend(&endpoint, None, 3);
    let response = b.complete(&request(), FIRST).unwrap();
    handle.join().unwrap();
    assert_eq!(response.text, "Hallo");
    assert_eq!(seen.lock().unwrap().len(), 3);
    assert_eq!(b.retries(), 2);
}

#[test]
fn retries_give_up_after_the_limit() {
    let (endpoint, seen, handle) = serve(vec![status(502), status(502)]);
    let err = backend(&endpoint, None, 1).complete(&request(), FIRST).unwrap_err();
    handle.join().unwrap();
    assert_eq!(
        err,
        GatewayError::Server {
            status: 502,
            attempts: 2
        }
    );
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn rate_limits_honor_retry_after() {
    let limited = Reply {
        status: 429,
        headers: vec![("Retry-After", "1".into())],
        body: "{}".into(),
    };
    let (endpoint, _, handle) = serve(vec![limited, ok("Hallo", "stop")]);
    let started = Instant::now();
    let response = backend(&endpoint, None, 2).complete(&request(), FIRST).unwrap();
    handle.join().unwrap();
    assert_eq!(response.text, "Hallo");
    // The configured backoff is 10 ms; only the header explains a full second.
    assert!(
        started.elapsed() >= Duration::from_millis(950),
        "{:?}",
        started.elapsed()
    );
}

#[test]
fn auth_failures_are_not_retried() {
    let (endpoint, seen, handle) = serve(vec![status(401)]);
    let b = backend(&endpoint, Some("bad"), 5);
    let err = b.complete(&request(), FIRST).unwrap_err();
    handle.join().unwrap();
    assert_eq!(err.kind(), "auth");
    assert_eq!(seen.lock().unwrap().len(), 1);
    assert_eq!(b.retries(), 0);
}

#[test]
fn client_errors_and_bad_payloads_fail_fast() {
    let garbage = Reply {
        status: 200,
        headers: vec![],
        body: "{\"choices\": []}".into(),
    };
    let (endpoint, seen, handle) = serve(vec![status(400), garbage]);
    let b = backend(&endpoint, None, 5);
    assert_eq!(b.complete(&request(), FIRST).unwrap_err().kind(), "http");
    assert_eq!(b.complete(&request(), FIRST).unwrap_err().kind(), "malformed");
    handle.join().unwrap();
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn gateway_reads_the_token_from_the_named_variable() {
    let (endpoint, seen, handle) = serve(vec![ok("Hallo", "stop")]);
    let var = "STT_REMOTE_TEST_TOKEN";
    std::env::set_var(var, "sk-from-env");
    let config = BackendConfig {
        kind: BackendKind::Remote,
        endpoint: Some(endpoint),
        model: Some("test-model".into()),
        api_key_env: Some(var.into()),
        max_retries: 0,
        ..BackendConfig::mock()
    };
    let gateway = Gateway::from_config(&config).unwrap();
    assert!(!format!("{gateway:?}").contains("sk-from-env"));
    let response = gateway.generate(&request()).unwrap();
    handle.join().unwrap();
    assert_eq!(response.text, "Hallo");
    assert_eq!(
        seen.lock().unwrap()[0].header("authorization"),
        Some("Bearer sk-from-env")
    );
    assert_eq!(gateway.stats().terminated_by_stop, 1);

    let missing = BackendConfig {
        api_key_env: Some("STT_REMOTE_TEST_UNSET".into()),
        ..config
    };
    let err = Gateway::from_config(&missing).unwrap_err();
    assert!(err.to_string().contains("STT_REMOTE_TEST_UNSET"));
}
