//! Canned chat-completions endpoint for tests.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

pub struct MockEndpoint {
    pub base_url: String,
    requests: Arc<AtomicUsize>,
}

impl MockEndpoint {
    /// Serves requests forever on a background thread. `reply` maps the user
    /// message of each request to a status code and assistant text.
    pub fn start<F>(reply: F) -> Self
    where
        F: Fn(&str) -> (u16, String) + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock endpoint");
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(AtomicUsize::new(0));
        let counter = Arc::clone(&requests);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let mut reader = BufReader::new(stream);
                let mut length = 0;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut body = vec![0; length];
                if reader.read_exact(&mut body).is_err() {
                    continue;
                }
                counter.fetch_add(1, Ordering::SeqCst);
                let request: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
                let user = request
                    .pointer("/messages/1/content")
                    .and_then(|v| v.as_str())
                    .unwrap_or("");
                let (status, text) = reply(user);
                let payload = serde_json::json!({
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]
                })
                .to_string();
                let mut stream = reader.into_inner();
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} MOCK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                    payload.len()
                );
            }
        });
        Self { base_url, requests }
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

/// Answers the way a model that follows the routing rules would, reading only
/// the prompt text.
pub fn rule_following_reply(user: &str) -> (u16, String) {
    let line = |prefix: &str| {
        user.lines()
            .find_map(|l| l.strip_prefix(prefix))
            .unwrap_or("")
            .to_string()
    };
    let last = line("last agent: ");
    let mut parts = last.splitn(2, ' ');
    let role = parts.next().unwrap_or("").to_string();
    let status = parts.next().unwrap_or("");
    if status.starts_with("failed") {
        return (200, role);
    }
    let next = match role.as_str() {
        "Monitoring" if user.contains("triggered: true") => "DataCollection",
        "Monitoring" => "Idle",
        "DataCollection" => "ModelSelection",
        "ModelSelection" => "Training",
        "Training" => "Evaluation",
        "Evaluation" if user.contains("evaluation verdict: Pass") => "Deployment",
        "Evaluation" => {
            let rounds = line("open event: ");
            let exhausted = rounds
                .rsplit("training rounds ")
                .next()
                .and_then(|r| {
                    let mut it = r.split(" of ");
                    Some((it.next()?.parse::<usize>().ok()?, it.next()?.parse::<usize>().ok()?))
                })
                .is_some_and(|(done, max)| done >= max);
            if exhausted {
                "Deployment"
            } else {
                "Training"
            }
        }
        "Deployment" => "Idle",
        _ => "Idle",
    };
    (200, format!("{next}."))
}
