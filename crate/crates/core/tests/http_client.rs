use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use dner_core::arbiter::{submit, HttpChatClient, Prompt, PromptConfig, RetryPolicy, SubmitError};

/// Serves one canned response per connection, recording each request.
fn serve(
    responses: Vec<(u16, &'static str)>,
) -> (String, Arc<Mutex<Vec<String>>>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    let handle = thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut payload = vec![0; length];
            reader.read_exact(&mut payload).unwrap();
            head.push_str(&String::from_utf8(payload).unwrap());
            log.lock().unwrap().push(head);
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen, handle)
}

fn prompt() -> Prompt {
    Prompt {
        system: "sys".into(),
        user: "usr".into(),
    }
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        base_delay_ms: 1,
        factor: 1.0,
        jitter: 0.0,
        max_delay_ms: 5,
    }
}

#[test]
fn rate_limit_then_success() {
    let ok =
        r#"{"choices": [{"message": {"role": "assistant", "content": "{\"entity_list\": []}"}}]}"#;
    let (url, seen, handle) = serve(vec![(429, "{}"), (200, ok)]);
    let client = HttpChatClient::new(url, "secret");
    let config = PromptConfig {
        request_timeout: Duration::from_secs(5),
        ..PromptConfig::default()
    };
    let out = submit("r", &prompt(), &config, &fast_retry(), &client).unwrap();
    handle.join().unwrap();
    assert_eq!(out.attempts, 2);
    assert_eq!(out.text, r#"{"entity_list": []}"#);
    let requests = seen.lock().unwrap();
    assert_eq!(requests.len(), 2);
    assert!(requests[0]
        .to_ascii_lowercase()
        .contains("authorization: bearer secret"));
    let body: serde_json::Value =
        serde_json::from_str(requests[0].split("\r\n\r\n").nth(1).unwrap()).unwrap();
    assert_eq!(body["model"], "gpt-4");
    assert_eq!(body["messages"][1]["content"], "usr");
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen, handle) = serve(vec![(400, r#"{"error": "bad"}"#)]);
    let client = HttpChatClient::new(url, "secret");
    let err = submit(
        "r",
        &prompt(),
        &PromptConfig::default(),
        &fast_retry(),
        &client,
    )
    .unwrap_err();
    handle.join().unwrap();
    assert!(
        matches!(err, SubmitError::Failed { attempts: 1, .. }),
        "{err:?}"
    );
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn server_errors_exhaust_retries() {
    let (url, _, handle) = serve(vec![(503, "{}"), (503, "{}"), (503, "{}")]);
    let client = HttpChatClient::new(url, "secret");
    let config = PromptConfig {
        max_retries: 2,
        ..PromptConfig::default()
    };
    let err = submit("r", &prompt(), &config, &fast_retry(), &client).unwrap_err();
    handle.join().unwrap();
    assert!(
        matches!(err, SubmitError::Exhausted { attempts: 3, .. }),
        "{err:?}"
    );
}
