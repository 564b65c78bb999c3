//! Blocking JSON-over-HTTP with bounded retries.

use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub timeout_secs: u64,
    /// Additional attempts after the first failure.
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            timeout_secs: 60,
            retries: 3,
            backoff_ms: 500,
            max_backoff_ms: 8_000,
        }
    }
}

impl HttpConfig {
    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .backoff_ms
            .saturating_mul(1u64 << attempt.min(16))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    config: HttpConfig,
    bearer: Option<String>,
}

impl std::fmt::Debug for JsonClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonClient")
            .field("config", &self.config)
            .field("bearer", &self.bearer.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

enum Attempt<T> {
    Done(T),
    Retry(String),
    Fail(String),
}

impl JsonClient {
    pub fn new(config: HttpConfig, bearer: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        JsonClient {
            agent,
            config,
            bearer,
        }
    }

    pub fn get<R: DeserializeOwned>(&self, url: &str) -> Result<R> {
        self.with_retries(url, || {
            let mut req = self.agent.get(url);
            if let Some(key) = &self.bearer {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            req.call()
        })
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R> {
        self.with_retries(url, || {
            let mut req = self.agent.post(url);
            if let Some(key) = &self.bearer {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            req.send_json(body)
        })
    }

    fn with_retries<R: DeserializeOwned>(
        &self,
        url: &str,
        send: impl Fn() -> std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<R> {
        let mut attempt = 0;
        loop {
            let outcome = match send() {
                Err(e) => Attempt::Retry(format!("request failed: {e}")),
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status == 429 || status >= 500 {
                        Attempt::Retry(format!("HTTP {status}"))
                    } else if status >= 400 {
                        let body = resp.body_mut().read_to_string().unwrap_or_default();
                        Attempt::Fail(format!("HTTP {status}: {}", truncate(&body, 200)))
                    } else {
                        match resp.body_mut().read_json::<R>() {
                            Ok(v) => Attempt::Done(v),
                            Err(e) => Attempt::Fail(format!("malformed response body: {e}")),
                        }
                    }
                }
            };
            match outcome {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(msg) => return Err(Error::Backend(format!("{url}: {msg}"))),
                Attempt::Retry(msg) if attempt < self.config.retries => {
                    let wait = self.config.backoff(attempt);
                    warn!("{url}: {msg}; retrying in {wait:?}");
                    thread::sleep(wait);
                    attempt += 1;
                }
                Attempt::Retry(msg) => {
                    debug!("{url}: giving up after {} attempts", attempt + 1);
                    return Err(Error::Backend(format!(
                        "{url}: {msg} (after {} attempts)",
                        attempt + 1
                    )));
                }
            }
        }
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
