use std::fmt;
use std::thread;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, UsageCounter, UsageStats};
use crate::error::{BackendError, Error, Result};
use crate::prompting::Prompt;

pub const DEFAULT_API_KEY_ENV: &str = "PYTHONESS_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    /// Whether a missing key is a configuration error. Local servers often
    /// need no key.
    pub require_key: bool,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub backoff_cap: Duration,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            require_key: true,
            timeout: Duration::from_secs(120),
            max_attempts: 5,
            backoff_base: Duration::from_secs(1),
            backoff_cap: Duration::from_secs(30),
        }
    }
}

/// Delay before retry number `retry` (1-based): `base * 2^(retry-1)`,
/// capped, then scaled by `1 + jitter` where `jitter` is in `[-0.2, 0.2]`.
pub fn backoff_delay(base: Duration, cap: Duration, retry: u32, jitter: f64) -> Duration {
    let exp = base.as_secs_f64() * 2f64.powi(retry.saturating_sub(1).min(62) as i32);
    let capped = exp.min(cap.as_secs_f64());
    Duration::from_secs_f64(capped * (1.0 + jitter.clamp(-0.2, 0.2)))
}

fn retryable(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

pub struct HttpBackend {
    config: HttpConfig,
    key: Option<String>,
    client: reqwest::blocking::Client,
    usage: UsageCounter,
}

impl fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpBackend")
            .field("base_url", &self.config.base_url)
            .field("model", &self.config.model)
            .field("api_key_env", &self.config.api_key_env)
            .field("key", &self.key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

enum Attempt {
    Done(String),
    Retry(BackendError),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self> {
        let key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        if key.is_none() && config.require_key {
            return Err(Error::Config(format!(
                "environment variable {} holds no API key",
                config.api_key_env
            )));
        }
        if config.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(HttpBackend {
            config,
            key,
            client,
            usage: UsageCounter::default(),
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &serde_json::Value) -> Attempt {
        let mut request = self.client.post(self.endpoint()).json(body);
        if let Some(key) = &self.key {
            request = request.bearer_auth(key);
        }
        let response = match request.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(BackendError::Transport(e.without_url().to_string())),
        };
        let status = response.status().as_u16();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(BackendError::Transport(e.without_url().to_string())),
        };
        if !(200..300).contains(&status) {
            let body: String = text.chars().take(500).collect();
            let err = BackendError::Status { status, body };
            return if retryable(status) {
                Attempt::Retry(err)
            } else {
                Attempt::Fatal(err)
            };
        }
        let parsed: ChatResponse = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => return Attempt::Fatal(BackendError::Malformed(e.to_string())),
        };
        match parsed.choices.into_iter().next().and_then(|c| c.message.content) {
            Some(content) if !content.trim().is_empty() => Attempt::Done(content),
            Some(_) => Attempt::Fatal(BackendError::Empty),
            None => Attempt::Fatal(BackendError::Malformed("response has no message content".into())),
        }
    }
}

impl Backend for HttpBackend {
    fn complete(&self, prompt: &Prompt) -> std::result::Result<String, BackendError> {
        self.usage.call(prompt);
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_text},
            ],
        });
        let mut last = None;
        for attempt in 1..=self.config.max_attempts {
            if attempt > 1 {
                let jitter = rand::thread_rng().gen_range(-0.2..=0.2);
                let delay = backoff_delay(self.config.backoff_base, self.config.backoff_cap, attempt - 1, jitter);
                log::debug!("retrying {} in {:?}", self.endpoint(), delay);
                thread::sleep(delay);
            }
            match self.attempt(&body) {
                Attempt::Done(text) => {
                    self.usage.output(&text);
                    return Ok(text);
                }
                Attempt::Fatal(err) => {
                    self.usage.failure();
                    return Err(err);
                }
                Attempt::Retry(err) => {
                    log::warn!("request to {} failed: {err}", self.endpoint());
                    self.usage.failure();
                    last = Some(err);
                }
            }
        }
        Err(BackendError::RetriesExhausted {
            attempts: self.config.max_attempts,
            last: Box::new(last.expect("at least one attempt")),
        })
    }

    fn id(&self) -> String {
        format!("http:{}", self.config.model)
    }

    fn usage(&self) -> UsageStats {
        self.usage.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn backoff_doubles_then_caps() {
        let (b, c) = (Duration::from_secs(1), Duration::from_secs(30));
        let secs: Vec<f64> = (1..=7).map(|r| backoff_delay(b, c, r, 0.0).as_secs_f64()).collect();
        assert_eq!(secs, vec![1.0, 2.0, 4.0, 8.0, 16.0, 30.0, 30.0]);
    }

    proptest! {
        #[test]
        fn jitter_stays_within_twenty_percent(retry in 1u32..100, jitter in -1.0f64..1.0) {
            let (b, c) = (Duration::from_secs(1), Duration::from_secs(30));
            let nominal = backoff_delay(b, c, retry, 0.0).as_secs_f64();
            let d = backoff_delay(b, c, retry, jitter).as_secs_f64();
            prop_assert!(d >= nominal * 0.8 - 1e-9 && d <= nominal * 1.2 + 1e-9);
            prop_assert!(d <= 36.0 + 1e-9);
        }
    }

    #[test]
    fn status_partition() {
        for s in [408, 429, 500, 502, 503, 599] {
            assert!(retryable(s), "{s}");
        }
        for s in [400, 401, 403, 404, 422] {
            assert!(!retryable(s), "{s}");
        }
    }
}
