#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use beliefnet_core::io::{generate_synthetic, SyntheticCohortSpec, SyntheticData};

/// A request as seen by [`MockEndpoint`].
#[derive(Debug, Clone)]
pub struct Captured {
    pub headers: Vec<(String, String)>,
    pub body: serde_json::Value,
}

/// Minimal HTTP/1.1 server answering every POST with a fixed status and
/// body. Connections are closed after each response.
pub struct MockEndpoint {
    pub url: String,
    pub captured: Arc<Mutex<Vec<Captured>>>,
}

impl MockEndpoint {
    pub fn start(status: u16, body: &str) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/trust", listener.local_addr().unwrap());
        let captured = Arc::new(Mutex::new(Vec::new()));
        let sink = captured.clone();
        let body = body.to_string();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                serve(stream, status, &body, &sink);
            }
        });
        Self { url, captured }
    }

    pub fn requests(&self) -> Vec<Captured> {
        self.captured.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, status: u16, body: &str, sink: &Mutex<Vec<Captured>>) -> Option<()> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut headers = Vec::new();
    let mut length = 0usize;
    loop {
        line.clear();
        reader.read_line(&mut line).ok()?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        if let Some((k, v)) = trimmed.split_once(':') {
            let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
            if k == "content-length" {
                length = v.parse().unwrap_or(0);
            }
            headers.push((k, v));
        }
    }
    let mut buf = vec![0; length];
    reader.read_exact(&mut buf).ok()?;
    // record before answering so the client never observes a missing entry
    sink.lock().unwrap().push(Captured {
        headers,
        body: serde_json::from_slice(&buf).unwrap_or(serde_json::Value::Null),
    });
    let reason = if status == 200 { "OK" } else { "Error" };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let mut out = stream;
    out.write_all(response.as_bytes()).ok()?;
    out.flush().ok()
}

/// A URL on which nothing listens.
pub fn dead_endpoint() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}/trust")
}

/// Small synthetic cohort for quick end-to-end runs.
pub fn small_cohort(seed: u64) -> SyntheticData {
    let spec = SyntheticCohortSpec {
        n_classes: 2,
        class_size_range: [12, 16],
        epochs: 3,
        ..Default::default()
    };
    generate_synthetic(&spec, seed).unwrap()
}
