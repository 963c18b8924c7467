//! Model providers backed by the configuration: the HTTP chat-completion
//! client and construction of the in-process ones.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use goalflow_core::gateway::{DisabledProvider, GatewayError, LlmGateway, ScriptedProvider, TemplateName};
use serde_json::json;

use crate::assets;
use crate::config::{Config, ConfigError, ProviderKind};

/// Counting semaphore capping concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// OpenAI-style `/chat/completions` client with temperature 0.
pub struct HttpProvider {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: String,
    max_retries: u32,
    backoff: Duration,
    gate: Gate,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("url", &self.url)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl HttpProvider {
    pub fn new(
        base_url: &str,
        model: &str,
        api_key: String,
        timeout: Duration,
        max_retries: u32,
        backoff: Duration,
        max_in_flight: usize,
    ) -> Result<Self, reqwest::Error> {
        let client = reqwest::blocking::Client::builder().timeout(timeout).build()?;
        Ok(Self {
            client,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            max_retries,
            backoff,
            gate: Gate::new(max_in_flight.max(1)),
        })
    }

    fn attempt(&self, prompt: &str) -> Result<String, (GatewayError, bool)> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    (GatewayError::Timeout, true)
                } else {
                    (GatewayError::Transport { message: e.to_string() }, true)
                }
            })?;
        let status = resp.status();
        if !status.is_success() {
            let retry = status.is_server_error() || status.as_u16() == 429;
            let body = resp.text().unwrap_or_default();
            return Err((
                GatewayError::Http {
                    status: status.as_u16(),
                    body,
                },
                retry,
            ));
        }
        let value: serde_json::Value = resp.json().map_err(|e| {
            (
                GatewayError::BadResponse {
                    message: e.to_string(),
                },
                false,
            )
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                (
                    GatewayError::BadResponse {
                        message: "missing choices[0].message.content".into(),
                    },
                    false,
                )
            })
    }
}

impl LlmGateway for HttpProvider {
    fn complete(&self, _template: TemplateName, prompt: &str) -> Result<String, GatewayError> {
        let _permit = self.gate.acquire();
        let mut delay = self.backoff;
        let mut attempt = 0;
        loop {
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err((e, retry)) if !retry || attempt >= self.max_retries => return Err(e),
                Err(_) => {
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }

    fn kind(&self) -> &'static str {
        "http"
    }
}

/// Build the configured provider. The HTTP key is read from the
/// environment here so a missing key fails at startup, not mid-dialogue.
pub fn build(cfg: &Config) -> Result<Arc<dyn LlmGateway>, ConfigError> {
    let p = &cfg.provider;
    match p.kind {
        ProviderKind::Disabled => Ok(Arc::new(DisabledProvider)),
        ProviderKind::Scripted => {
            let (text, origin) = match &p.fixture {
                Some(path) => (
                    std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                        path: path.display().to_string(),
                        source,
                    })?,
                    path.display().to_string(),
                ),
                None => (assets::FIXTURES.to_string(), "bundled fixtures".to_string()),
            };
            let provider = ScriptedProvider::from_json(&text).map_err(|e| ConfigError::Parse {
                path: origin,
                message: e.to_string(),
            })?;
            Ok(Arc::new(provider))
        }
        ProviderKind::Http => {
            let base_url = p
                .base_url
                .as_deref()
                .ok_or_else(|| ConfigError::Invalid("provider.base_url is required".into()))?;
            let key = std::env::var(&p.api_key_env)
                .ok()
                .filter(|k| !k.is_empty())
                .ok_or_else(|| ConfigError::Invalid(format!("environment variable {} is not set", p.api_key_env)))?;
            let provider = HttpProvider::new(
                base_url,
                &p.model,
                key,
                Duration::from_millis(p.timeout_ms),
                p.max_retries,
                Duration::from_millis(p.backoff_ms),
                p.max_in_flight,
            )
            .map_err(|e| ConfigError::Invalid(format!("cannot build HTTP client: {e}")))?;
            Ok(Arc::new(provider))
        }
    }
}
