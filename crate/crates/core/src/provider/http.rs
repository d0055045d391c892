//! OpenAI-compatible chat-completions and embeddings backend.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use super::{LlmProvider, LlmRequest, ProviderError};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "PATTERNSCOUT_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub model: String,
    pub embed_model: String,
    pub api_key: Option<String>,
    pub max_inflight: usize,
    pub requests_per_minute: u32,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(endpoint: &str, model: &str, embed_model: &str) -> Self {
        HttpConfig {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            embed_model: embed_model.to_string(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            max_inflight: 4,
            requests_per_minute: 500,
            max_attempts: 5,
            backoff_base: Duration::from_millis(500),
            timeout: Duration::from_secs(180),
        }
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|p| p.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

struct TokenBucket {
    capacity: f64,
    per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    fn per_minute(rpm: u32) -> Self {
        let capacity = f64::from(rpm.max(1));
        TokenBucket {
            capacity,
            per_sec: capacity / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    fn take(&self) {
        loop {
            let wait = {
                let mut s = self.state.lock().unwrap_or_else(|p| p.into_inner());
                let now = Instant::now();
                s.0 = (s.0 + now.duration_since(s.1).as_secs_f64() * self.per_sec).min(self.capacity);
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - s.0) / self.per_sec)
            };
            std::thread::sleep(wait);
        }
    }
}

pub struct HttpProvider {
    config: HttpConfig,
    client: Client,
    inflight: Semaphore,
    bucket: TokenBucket,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("endpoint", &self.config.endpoint)
            .field("model", &self.config.model)
            .finish()
    }
}

enum Outcome {
    Done(serde_json::Value),
    Retry { after: Option<Duration>, reason: String },
}

impl HttpProvider {
    pub fn new(config: HttpConfig) -> Result<Self, ProviderError> {
        if config.endpoint.is_empty() {
            return Err(ProviderError::Config("provider.endpoint is required for the http backend".into()));
        }
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(HttpProvider {
            inflight: Semaphore::new(config.max_inflight),
            bucket: TokenBucket::per_minute(config.requests_per_minute),
            config,
            client,
        })
    }

    fn post(&self, route: &str, body: &serde_json::Value) -> Result<serde_json::Value, ProviderError> {
        let url = format!("{}/{route}", self.config.endpoint);
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            let outcome = {
                let _permit = self.inflight.acquire();
                self.bucket.take();
                self.send_once(&url, body)?
            };
            match outcome {
                Outcome::Done(v) => return Ok(v),
                Outcome::Retry { after, reason } => {
                    last = reason;
                    if attempt < attempts {
                        let backoff = self.config.backoff_base.saturating_mul(1 << (attempt - 1).min(16));
                        std::thread::sleep(after.unwrap_or(backoff).min(Duration::from_secs(120)));
                    }
                }
            }
        }
        Err(ProviderError::Transport {
            attempts,
            message: last,
        })
    }

    fn send_once(&self, url: &str, body: &serde_json::Value) -> Result<Outcome, ProviderError> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => {
                return Ok(Outcome::Retry {
                    after: None,
                    reason: e.to_string(),
                })
            }
        };
        let status = resp.status();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(Duration::from_secs_f64);
        let text = resp.text().unwrap_or_default();
        if status.is_success() {
            return serde_json::from_str(&text)
                .map(Outcome::Done)
                .map_err(|e| ProviderError::Http {
                    status: status.as_u16(),
                    body: format!("unparseable body ({e}): {text}"),
                });
        }
        if status == StatusCode::TOO_MANY_REQUESTS {
            return Ok(Outcome::Retry {
                after: retry_after,
                reason: format!("rate limited: {text}"),
            });
        }
        if status.is_server_error() || status == StatusCode::REQUEST_TIMEOUT {
            return Ok(Outcome::Retry {
                after: None,
                reason: format!("HTTP {}: {text}", status.as_u16()),
            });
        }
        Err(ProviderError::Http {
            status: status.as_u16(),
            body: text,
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: usize,
    embedding: Vec<f64>,
}

impl LlmProvider for HttpProvider {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn embed_model_id(&self) -> &str {
        &self.config.embed_model
    }

    fn complete(&self, request: &LlmRequest) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.config.model,
            "messages": [
                { "role": "system", "content": request.system_text },
                { "role": "user", "content": request.user_text },
            ],
            "seed": request.seed,
            "response_format": { "type": "json_object" },
        });
        let value = self.post("chat/completions", &body)?;
        let parsed: ChatResponse = serde_json::from_value(value.clone()).map_err(|e| ProviderError::Http {
            status: 200,
            body: format!("unexpected chat response shape ({e}): {value}"),
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Http {
                status: 200,
                body: format!("chat response has no content: {value}"),
            })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({ "model": self.config.embed_model, "input": texts });
        let value = self.post("embeddings", &body)?;
        let mut parsed: EmbeddingResponse = serde_json::from_value(value).map_err(|e| ProviderError::Http {
            status: 200,
            body: format!("unexpected embedding response shape: {e}"),
        })?;
        parsed.data.sort_by_key(|d| d.index);
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}
