//! Chat-completions client shared by phrase generation and stage
//! classification.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{HttpConfig, JsonClient};

/// Environment variable holding the bearer token for remote backends.
pub const API_KEY_ENV: &str = "WORKFLOW_MINER_API_KEY";

pub fn api_key_from_env() -> Option<String> {
    std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Anything that turns a message sequence into a reply.
pub trait ChatModel: Sync {
    fn id(&self) -> String;

    fn chat(&self, messages: &[ChatMessage]) -> Result<String>;

    fn complete(&self, prompt: &str) -> Result<String> {
        self.chat(&[ChatMessage::user(prompt)])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    /// 0 disables rate limiting.
    pub requests_per_minute: u32,
    /// Upper bound on in-flight requests.
    pub concurrency: usize,
    pub http: HttpConfig,
}

impl Default for ChatConfig {
    fn default() -> Self {
        ChatConfig {
            base_url: String::new(),
            model: String::new(),
            temperature: 0.0,
            max_tokens: None,
            requests_per_minute: 0,
            concurrency: 4,
            http: HttpConfig::default(),
        }
    }
}

impl ChatConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_url.is_empty() {
            return Err(Error::Config("chat backend needs a base_url".into()));
        }
        if self.model.is_empty() {
            return Err(Error::Config("chat backend needs a model name".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("chat concurrency must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::Config(format!(
                "temperature must lie in [0, 2], got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Spaces request starts at least `interval` apart across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        let interval = if requests == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(60.0 / f64::from(requests))
        };
        RateLimiter {
            interval,
            next: Mutex::new(Instant::now()),
        }
    }

    /// Blocks until the caller may start a request.
    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [ChatMessage],
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

/// `POST {base_url}/chat/completions`.
#[derive(Debug)]
pub struct RemoteChat {
    client: JsonClient,
    config: ChatConfig,
    limiter: RateLimiter,
}

impl RemoteChat {
    pub fn new(config: ChatConfig, api_key: Option<String>) -> Result<Self> {
        config.validate()?;
        Ok(RemoteChat {
            client: JsonClient::new(config.http.clone(), api_key),
            limiter: RateLimiter::per_minute(config.requests_per_minute),
            config,
        })
    }

    pub fn config(&self) -> &ChatConfig {
        &self.config
    }
}

impl ChatModel for RemoteChat {
    fn id(&self) -> String {
        format!("chat:{}", self.config.model)
    }

    fn chat(&self, messages: &[ChatMessage]) -> Result<String> {
        self.limiter.acquire();
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = ChatRequest {
            model: &self.config.model,
            temperature: self.config.temperature,
            messages,
            max_tokens: self.config.max_tokens,
        };
        let resp: ChatResponse = self.client.post(&url, &body)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::Backend("chat response has no message content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limiter_spaces_requests() {
        let limiter = RateLimiter::per_minute(1200); // 50 ms apart
        let start = Instant::now();
        for _ in 0..4 {
            limiter.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(150));
    }

    #[test]
    fn unlimited_limiter_never_waits() {
        let limiter = RateLimiter::per_minute(0);
        let start = Instant::now();
        for _ in 0..1000 {
            limiter.acquire();
        }
        assert!(start.elapsed() < Duration::from_millis(100));
    }

    #[test]
    fn config_requires_endpoint_and_model() {
        assert!(matches!(ChatConfig::default().validate(), Err(Error::Config(_))));
        let ok = ChatConfig {
            base_url: "http://localhost".into(),
            model: "m".into(),
            ..Default::default()
        };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn debug_output_hides_the_key() {
        let chat = RemoteChat::new(
            ChatConfig {
                base_url: "http://localhost".into(),
                model: "m".into(),
                ..Default::default()
            },
            Some("sk-very-secret".into()),
        )
        .unwrap();
        assert!(!format!("{chat:?}").contains("sk-very-secret"));
    }
}
