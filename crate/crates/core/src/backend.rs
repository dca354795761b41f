//! Text-generation backend contract shared by the response splitter and the
//! grammar-correction stage.
//!
//! A backend takes a prompt and returns generated text. The HTTP adapter
//! speaks a small JSON protocol:
//!
//! ```text
//! POST <endpoint>/generate
//! {"prompt": "...", "max_tokens": 512, "temperature": 0.0}
//! -> {"text": "..."}
//! ```

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{AsaError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: u32,
    /// Always 0: decoding must be deterministic.
    pub temperature: f64,
}

impl GenerationRequest {
    pub fn greedy(prompt: String, max_tokens: u32) -> Self {
        GenerationRequest {
            prompt,
            max_tokens,
            temperature: 0.0,
        }
    }
}

pub trait TextGenerator: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<String>;
}

#[derive(Debug, Deserialize)]
struct GenerationResponse {
    text: String,
}

/// Talks to a `POST /generate` endpoint.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    url: String,
    timeout: Duration,
}

impl HttpGenerator {
    /// `base` is the service root; `/generate` is appended unless already
    /// present.
    pub fn new(base: &str) -> Self {
        let base = base.trim_end_matches('/');
        let url = if base.ends_with("/generate") {
            base.to_string()
        } else {
            format!("{base}/generate")
        };
        HttpGenerator {
            url,
            timeout: Duration::from_secs(120),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl TextGenerator for HttpGenerator {
    fn generate(&self, request: &GenerationRequest) -> Result<String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut resp = agent
            .post(&self.url)
            .send_json(request)
            .map_err(|e| AsaError::Transport(format!("{}: {e}", self.url)))?;
        let body: GenerationResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| AsaError::Transport(format!("{}: bad response body: {e}", self.url)))?;
        Ok(body.text)
    }
}

#[cfg(test)]
pub(crate) mod mock {
    //! A one-thread HTTP server answering a fixed number of requests.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::thread;

    /// Serves `n` requests, replying with `reply(body)`; returns the base URL
    /// and a channel of received request bodies.
    pub fn serve<F>(n: usize, reply: F) -> (String, mpsc::Receiver<String>)
    where
        F: Fn(&str) -> String + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for stream in listener.incoming().take(n) {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let l = line.trim_end();
                    if l.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = l.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).unwrap();
                let body = String::from_utf8(body).unwrap();
                let out = reply(&body);
                tx.send(body).ok();
                write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    out.len(),
                    out
                )
                .unwrap();
            }
        });
        (format!("http://{addr}"), rx)
    }
}
