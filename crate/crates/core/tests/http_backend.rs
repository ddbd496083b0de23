use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use indexrag_core::gateway::{HttpConfig, RetryPolicy};
use indexrag_core::{ChatRequest, Gateway};

struct Recorded {
    path: String,
    auth: Option<String>,
    body: serde_json::Value,
}

/// Serves the scripted responses in order, one connection each.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Recorded>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut length = 0;
            let mut auth = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => auth = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut raw = vec![0; length];
            reader.read_exact(&mut raw).unwrap();
            log.lock().unwrap().push(Recorded {
                path: request_line.split_whitespace().nth(1).unwrap().to_string(),
                auth,
                body: serde_json::from_slice(&raw).unwrap(),
            });
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn gateway(url: String) -> Gateway {
    Gateway::openai(HttpConfig {
        base_url: url,
        api_key: Some("test-key".into()),
        retry: RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(5),
        },
        timeout: Duration::from_secs(10),
        ..HttpConfig::default()
    })
    .unwrap()
}

fn chat_ok(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
        .to_string()
}

#[test]
fn rate_limit_then_success_counts_one_call() {
    let (url, seen) = serve(vec![
        (429, r#"{"error":"slow down"}"#.into()),
        (200, chat_ok("Weston-super-Mare")),
    ]);
    let gw = gateway(url);
    let out = gw.chat_complete(&ChatRequest::answer("Where?")).unwrap();
    assert_eq!(out, "Weston-super-Mare");
    assert_eq!(gw.ledger().chat_calls(), 1);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert_eq!(seen[1].path, "/v1/chat/completions");
    assert_eq!(seen[1].auth.as_deref(), Some("Bearer test-key"));
    assert_eq!(seen[1].body["model"], "gpt-4o-mini");
    assert_eq!(seen[1].body["temperature"], 0.0);
    assert_eq!(seen[1].body["max_tokens"], 50);
    assert_eq!(seen[1].body["messages"][0]["content"], "Where?");
}

#[test]
fn client_error_fails_fast_with_status() {
    let (url, seen) = serve(vec![(400, r#"{"error":"bad request"}"#.into())]);
    let gw = gateway(url);
    let err = gw
        .chat_complete(&ChatRequest::answer("Where?"))
        .unwrap_err();
    assert_eq!(err.status(), Some(400));
    assert_eq!(gw.ledger().chat_calls(), 0);
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn server_errors_exhaust_retries() {
    let (url, seen) = serve(vec![
        (500, "{}".into()),
        (502, "{}".into()),
        (503, "{}".into()),
    ]);
    let gw = gateway(url);
    let err = gw
        .chat_complete(&ChatRequest::answer("Where?"))
        .unwrap_err();
    assert_eq!(err.status(), Some(503));
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn embeddings_are_reordered_by_index() {
    let body = serde_json::json!({"data": [
        {"index": 1, "embedding": [0.0, 1.0]},
        {"index": 0, "embedding": [1.0, 0.0]},
    ]});
    let (url, seen) = serve(vec![(200, body.to_string())]);
    let gw = gateway(url);
    let out = gw
        .embed_batch(&["first".to_string(), "second".to_string()])
        .unwrap();
    assert_eq!(out, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    assert_eq!(gw.ledger().embed_calls(), 1);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/embeddings");
    assert_eq!(
        seen[0].body["input"],
        serde_json::json!(["first", "second"])
    );
}
