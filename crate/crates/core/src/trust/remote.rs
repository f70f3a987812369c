use std::time::{Duration, Instant};

use log::warn;
use serde::{Deserialize, Serialize};

use super::wire::WireRequest;
use super::{trust_stub, ProviderTag, TrustProvider, TrustRequest, TrustResponse};
use crate::error::{Error, Result};

pub const ENDPOINT_ENV: &str = "BELIEFNET_TRUST_ENDPOINT";
pub const TOKEN_ENV: &str = "BELIEFNET_TRUST_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    /// Total tries per request before falling back to the stub.
    pub max_attempts: usize,
    pub retry_backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            timeout_ms: 5_000,
            max_attempts: 2,
            retry_backoff_ms: 50,
        }
    }
}

#[derive(Debug, Deserialize)]
struct Reply {
    trust: f64,
}

/// HTTP trust provider. Any failure after the configured attempts falls
/// back to the consistency stub and is tagged as such.
pub struct RemoteTrust {
    endpoint: String,
    token: Option<String>,
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteTrust {
    /// Endpoint comes from the config, else from `BELIEFNET_TRUST_ENDPOINT`.
    /// The bearer token, if any, is read from `BELIEFNET_TRUST_TOKEN`.
    pub fn new(config: RemoteConfig) -> Result<Self> {
        let endpoint = config
            .endpoint
            .clone()
            .or_else(|| std::env::var(ENDPOINT_ENV).ok())
            .filter(|e| !e.is_empty())
            .ok_or_else(|| {
                Error::Config(format!(
                    "remote trust provider needs an endpoint (config or {ENDPOINT_ENV})"
                ))
            })?;
        if config.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be >= 1".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        Ok(Self {
            endpoint,
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            config,
            agent,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn call(&self, body: &serde_json::Value) -> std::result::Result<f64, String> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        let reply: Reply = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        if reply.trust.is_finite() {
            Ok(reply.trust)
        } else {
            Err(format!("non-finite trust value {}", reply.trust))
        }
    }
}

impl TrustProvider for RemoteTrust {
    fn assess(&self, req: &TrustRequest) -> TrustResponse {
        let body = WireRequest::from_request(req).to_value();
        let started = Instant::now();
        let mut last_err = String::new();
        for attempt in 1..=self.config.max_attempts {
            match self.call(&body) {
                Ok(raw) => {
                    let omega = raw.clamp(0.0, 1.0);
                    if omega != raw {
                        warn!("trust provider returned {raw}, clamped to {omega}");
                    }
                    return TrustResponse {
                        omega,
                        provider: ProviderTag::Remote,
                        latency_ms: Some(started.elapsed().as_millis() as u64),
                    };
                }
                Err(e) => {
                    last_err = e;
                    if attempt < self.config.max_attempts {
                        std::thread::sleep(Duration::from_millis(self.config.retry_backoff_ms));
                    }
                }
            }
        }
        warn!(
            "trust provider failed after {} attempt(s): {last_err}; using stub",
            self.config.max_attempts
        );
        trust_stub(req)
    }

    fn name(&self) -> &'static str {
        "remote"
    }
}
