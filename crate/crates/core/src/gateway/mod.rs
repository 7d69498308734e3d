// SPDX-License-Identifier: Apache-2.0

//! Chat and embedding access behind one interface.
//!
//! Two backends: `stub` (deterministic, offline, see [`stub`]) and `http`
//! (POST `{model, messages}` to `<endpoint>/chat` expecting `{content}`,
//! POST `{model, input}` to `<endpoint>/embeddings` expecting `{embedding}`).
//! Every response is cached under a content hash of the full request.

pub mod cache;
pub mod http;
pub mod stub;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::error::ArgumentError;
pub use cache::{cache_key, CacheEntry, CachedValue, ResponseCache};
pub use http::{Transport, TransportError, UreqTransport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Stub,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "stub" => Ok(BackendKind::Stub),
            "http" => Ok(BackendKind::Http),
            other => Err(format!("unknown backend {other:?} (expected stub or http)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub backend: BackendKind,
    pub endpoint: String,
    pub api_key_env: String,
    pub chat_model: String,
    pub embedding_model: String,
    pub d_sem: usize,
    pub max_retries: u32,
    pub backoff_initial_ms: u64,
    pub backoff_multiplier: f64,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    pub cache_path: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            backend: BackendKind::Stub,
            endpoint: "http://127.0.0.1:8080".to_string(),
            api_key_env: "SVACOV_API_KEY".to_string(),
            chat_model: String::new(),
            embedding_model: String::new(),
            d_sem: 64,
            max_retries: 3,
            backoff_initial_ms: 500,
            backoff_multiplier: 2.0,
            timeout_ms: 60_000,
            max_in_flight: 4,
            cache_path: None,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), ArgumentError> {
        if self.d_sem < 8 {
            return Err(ArgumentError::new(format!("d_sem must be >= 8, got {}", self.d_sem)));
        }
        if self.max_in_flight == 0 {
            return Err(ArgumentError::new("max_in_flight must be >= 1"));
        }
        if self.backoff_multiplier.is_nan() || self.backoff_multiplier < 1.0 {
            return Err(ArgumentError::new("backoff_multiplier must be >= 1"));
        }
        Ok(())
    }

    /// Delay before retry number `attempt` (0-based).
    pub fn backoff_delay(&self, attempt: u32) -> Duration {
        let ms = self.backoff_initial_ms as f64 * self.backoff_multiplier.powi(attempt as i32);
        Duration::from_millis(ms.round() as u64)
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Argument(#[from] ArgumentError),
    #[error("backend failed after {attempts} attempt(s): {message}")]
    Backend { attempts: u32, message: String },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("embedding has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cache I/O: {0}")]
    Cache(#[from] std::io::Error),
}

struct Permits {
    free: Mutex<usize>,
    released: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().expect("permit lock poisoned");
        while *free == 0 {
            free = self.released.wait(free).expect("permit lock poisoned");
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock poisoned") += 1;
        self.0.released.notify_one();
    }
}

enum Backend {
    Stub,
    Http {
        transport: Box<dyn Transport>,
        api_key: Option<String>,
    },
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub struct Gateway {
    cfg: GatewayConfig,
    backend: Backend,
    cache: ResponseCache,
    network_requests: AtomicU64,
    permits: Permits,
    sleeper: Sleeper,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend_tag())
            .field("network_requests", &self.network_requests())
            .finish()
    }
}

impl Gateway {
    /// Builds the configured backend; `http` uses [`UreqTransport`] and reads
    /// the bearer token from `api_key_env` if that variable is set.
    pub fn new(cfg: GatewayConfig) -> Result<Gateway, GatewayError> {
        let backend = match cfg.backend {
            BackendKind::Stub => Backend::Stub,
            BackendKind::Http => Backend::Http {
                transport: Box::new(UreqTransport),
                api_key: std::env::var(&cfg.api_key_env).ok(),
            },
        };
        Gateway::build(cfg, backend)
    }

    pub fn stub() -> Gateway {
        Gateway::new(GatewayConfig::default()).expect("default config is valid")
    }

    /// HTTP backend over a caller-supplied transport.
    pub fn with_transport(
        cfg: GatewayConfig,
        transport: Box<dyn Transport>,
        api_key: Option<String>,
    ) -> Result<Gateway, GatewayError> {
        Gateway::build(cfg, Backend::Http { transport, api_key })
    }

    fn build(cfg: GatewayConfig, backend: Backend) -> Result<Gateway, GatewayError> {
        cfg.validate()?;
        let cache = match &cfg.cache_path {
            Some(path) => ResponseCache::open(path)?,
            None => ResponseCache::in_memory(),
        };
        Ok(Gateway {
            permits: Permits {
                free: Mutex::new(cfg.max_in_flight),
                released: Condvar::new(),
            },
            cfg,
            backend,
            cache,
            network_requests: AtomicU64::new(0),
            sleeper: Arc::new(std::thread::sleep),
        })
    }

    /// Replaces the function used to wait between retries.
    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Gateway {
        self.sleeper = sleeper;
        self
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn d_sem(&self) -> usize {
        self.cfg.d_sem
    }

    pub fn max_in_flight(&self) -> usize {
        self.cfg.max_in_flight
    }

    pub fn max_retries(&self) -> u32 {
        self.cfg.max_retries
    }

    pub fn backend_tag(&self) -> String {
        match self.backend {
            Backend::Stub => "stub".to_string(),
            Backend::Http { .. } => format!("http:{}", self.cfg.endpoint),
        }
    }

    /// Number of HTTP attempts made so far (always 0 for the stub).
    pub fn network_requests(&self) -> u64 {
        self.network_requests.load(Ordering::SeqCst)
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn chat(&self, prompt: &str) -> Result<String, GatewayError> {
        if prompt.is_empty() {
            return Err(ArgumentError::new("prompt must not be empty").into());
        }
        let payload = json!({
            "model": self.cfg.chat_model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let key = cache_key(&self.backend_tag(), &self.cfg.chat_model, &payload);
        if let Some(CachedValue::Text(text)) = self.cache.get(&key) {
            return Ok(text);
        }
        let text = match &self.backend {
            Backend::Stub => stub::stub_chat(prompt),
            Backend::Http { .. } => {
                let url = format!("{}/chat", self.cfg.endpoint.trim_end_matches('/'));
                let resp = self.post_with_retry(&url, &payload)?;
                resp.get("content")
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| GatewayError::Backend {
                        attempts: 1,
                        message: "response lacks a string `content` field".into(),
                    })?
            }
        };
        self.cache.put(key, CachedValue::Text(text.clone()))?;
        Ok(text)
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        if text.is_empty() {
            return Err(ArgumentError::new("text to embed must not be empty").into());
        }
        let payload = json!({
            "model": self.cfg.embedding_model,
            "input": text,
            "dimensions": self.cfg.d_sem,
        });
        let key = cache_key(&self.backend_tag(), &self.cfg.embedding_model, &payload);
        if let Some(CachedValue::Vector(v)) = self.cache.get(&key) {
            return Ok(v);
        }
        let vector = match &self.backend {
            Backend::Stub => stub::stub_embedding(text, self.cfg.d_sem),
            Backend::Http { .. } => {
                let url = format!("{}/embeddings", self.cfg.endpoint.trim_end_matches('/'));
                let body = json!({"model": self.cfg.embedding_model, "input": text});
                let resp = self.post_with_retry(&url, &body)?;
                resp.get("embedding")
                    .and_then(Value::as_array)
                    .and_then(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>())
                    .ok_or_else(|| GatewayError::Backend {
                        attempts: 1,
                        message: "response lacks a numeric `embedding` array".into(),
                    })?
            }
        };
        if vector.len() != self.cfg.d_sem {
            return Err(GatewayError::DimensionMismatch {
                expected: self.cfg.d_sem,
                got: vector.len(),
            });
        }
        self.cache.put(key, CachedValue::Vector(vector.clone()))?;
        Ok(vector)
    }

    fn post_with_retry(&self, url: &str, body: &Value) -> Result<Value, GatewayError> {
        let Backend::Http { transport, api_key } = &self.backend else {
            unreachable!("only the http backend posts");
        };
        let _permit = self.permits.acquire();
        let timeout = Duration::from_millis(self.cfg.timeout_ms);
        let mut attempt = 0u32;
        loop {
            self.network_requests.fetch_add(1, Ordering::SeqCst);
            match transport.post_json(url, api_key.as_deref(), body, timeout) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_auth() => return Err(GatewayError::Auth(e.to_string())),
                Err(e) if e.is_transient() && attempt < self.cfg.max_retries => {
                    let delay = self.cfg.backoff_delay(attempt);
                    log::warn!("{url}: {e}; retry {} in {delay:?}", attempt + 1);
                    (self.sleeper)(delay);
                    attempt += 1;
                }
                Err(e) => {
                    return Err(GatewayError::Backend {
                        attempts: attempt + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
    }
}
