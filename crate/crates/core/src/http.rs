//! Minimal blocking client for OpenAI-compatible endpoints.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const API_BASE_VAR: &str = "SKILLGEN_API_BASE";
pub const API_KEY_VAR: &str = "SKILLGEN_API_KEY";

#[derive(Debug, Error, PartialEq)]
pub enum HttpError {
    #[error("{API_KEY_VAR} is not set")]
    MissingKey,
    #[error("no API base URL: set it in the config or via {API_BASE_VAR}")]
    MissingBase,
    #[error("request to {url} failed after {attempts} attempt(s): {message}")]
    Request {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("unexpected response from {url}: {message}")]
    BadResponse { url: String, message: String },
}

/// Connection settings shared by the chat and embedding clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpSettings {
    pub model: String,
    pub base_url: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            model: String::new(),
            base_url: None,
            timeout_secs: 60,
            max_retries: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    base: String,
    key: String,
    settings: HttpSettings,
}

impl HttpClient {
    /// Resolves the base URL and key without touching the network. The
    /// environment overrides the configured base URL.
    pub fn from_env(settings: &HttpSettings) -> Result<Self, HttpError> {
        let key = std::env::var(API_KEY_VAR)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or(HttpError::MissingKey)?;
        let base = std::env::var(API_BASE_VAR)
            .ok()
            .filter(|b| !b.is_empty())
            .or_else(|| settings.base_url.clone())
            .ok_or(HttpError::MissingBase)?;
        Ok(Self::new(&base, &key, settings))
    }

    pub fn new(base: &str, key: &str, settings: &HttpSettings) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(settings.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            base: base.trim_end_matches('/').to_string(),
            key: key.to_string(),
            settings: settings.clone(),
        }
    }

    pub fn model(&self) -> &str {
        &self.settings.model
    }

    /// POSTs JSON to `{base}{path}`, retrying transport errors, 429 and 5xx
    /// responses with exponential backoff.
    pub fn post_json(&self, path: &str, body: &Value) -> Result<Value, HttpError> {
        let url = format!("{}{}", self.base, path);
        let attempts = self.settings.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.settings.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            let sent = self
                .agent
                .post(&url)
                .header("Authorization", &format!("Bearer {}", self.key))
                .send_json(body);
            match sent {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status == 429 || status >= 500 {
                        last = format!("HTTP {status}");
                        continue;
                    }
                    if status >= 400 {
                        let text = resp.body_mut().read_to_string().unwrap_or_default();
                        return Err(HttpError::Request {
                            url,
                            attempts: attempt + 1,
                            message: format!("HTTP {status}: {text}"),
                        });
                    }
                    return resp
                        .body_mut()
                        .read_json::<Value>()
                        .map_err(|e| HttpError::BadResponse {
                            url: url.clone(),
                            message: e.to_string(),
                        });
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(HttpError::Request {
            url,
            attempts,
            message: last,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Serves the given raw HTTP responses, one per connection, and returns
    /// the captured requests.
    pub(crate) fn serve(responses: Vec<String>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for resp in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    if n == 0 || request_complete(&buf) {
                        break;
                    }
                }
                seen.push(dechunk(&String::from_utf8_lossy(&buf)));
                stream.write_all(resp.as_bytes()).unwrap();
            }
            seen
        });
        (base, handle)
    }

    fn request_complete(buf: &[u8]) -> bool {
        let text = String::from_utf8_lossy(buf);
        let Some(head_end) = text.find("\r\n\r\n") else {
            return false;
        };
        let head = text[..head_end].to_ascii_lowercase();
        if head.contains("transfer-encoding: chunked") {
            return text.ends_with("0\r\n\r\n");
        }
        let len = head
            .lines()
            .find_map(|l| l.strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
            .unwrap_or(0);
        buf.len() >= head_end + 4 + len
    }

    /// Rewrites a chunked request so tests can read the body directly.
    fn dechunk(raw: &str) -> String {
        let Some(head_end) = raw.find("\r\n\r\n") else {
            return raw.to_string();
        };
        let (head, mut rest) = (&raw[..head_end], &raw[head_end + 4..]);
        if !head.to_ascii_lowercase().contains("transfer-encoding: chunked") {
            return raw.to_string();
        }
        let mut body = String::new();
        while let Some(line_end) = rest.find("\r\n") {
            let size = usize::from_str_radix(rest[..line_end].trim(), 16).unwrap_or(0);
            if size == 0 {
                break;
            }
            body.push_str(&rest[line_end + 2..line_end + 2 + size]);
            rest = &rest[line_end + 2 + size + 2..];
        }
        format!("{head}\r\n\r\n{body}")
    }

    pub(crate) fn ok_json(body: &str) -> String {
        format!(
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            body.len(),
            body
        )
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let busy = "HTTP/1.1 503 Service Unavailable\r\nContent-Length: 0\r\nConnection: close\r\n\r\n".to_string();
        let (base, handle) = serve(vec![busy, ok_json(r#"{"ok":true}"#)]);
        let settings = HttpSettings { backoff_ms: 1, ..HttpSettings::default() };
        let client = HttpClient::new(&base, "sk-test", &settings);
        let v = client.post_json("/v1/x", &serde_json::json!({"a": 1})).unwrap();
        assert_eq!(v["ok"], true);
        let reqs = handle.join().unwrap();
        assert_eq!(reqs.len(), 2);
        assert!(reqs[0].starts_with("POST /v1/x"));
        assert!(reqs[0].to_ascii_lowercase().contains("authorization: bearer sk-test"));
    }

    #[test]
    fn client_errors_are_not_retried() {
        let bad = "HTTP/1.1 401 Unauthorized\r\nContent-Length: 4\r\nConnection: close\r\n\r\nnope".to_string();
        let (base, handle) = serve(vec![bad]);
        let settings = HttpSettings { backoff_ms: 1, ..HttpSettings::default() };
        let client = HttpClient::new(&base, "k", &settings);
        let err = client.post_json("/v1/x", &serde_json::json!({})).unwrap_err();
        assert!(matches!(err, HttpError::Request { attempts: 1, .. }), "{err:?}");
        handle.join().unwrap();
    }
}
