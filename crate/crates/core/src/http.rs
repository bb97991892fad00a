//! Minimal blocking HTTP transport plus retry/backoff.
//!
//! Remote clients talk to a [`HttpTransport`] rather than to reqwest
//! directly so tests can substitute scripted responses.

use std::thread;
use std::time::Duration;

use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

impl HttpResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        HttpResponse {
            status: 200,
            body: body.into(),
        }
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

/// Connection-level failure: nothing usable came back.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{0}")]
pub struct TransportFailure(pub String);

pub trait HttpTransport: Send + Sync {
    fn get(&self, url: &str, query: &[(String, String)]) -> Result<HttpResponse, TransportFailure>;

    fn post_json(
        &self,
        url: &str,
        body: &serde_json::Value,
    ) -> Result<HttpResponse, TransportFailure>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, TransportFailure> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportFailure(e.to_string()))?;
        Ok(ReqwestTransport { client })
    }

    fn finish(
        resp: reqwest::Result<reqwest::blocking::Response>,
    ) -> Result<HttpResponse, TransportFailure> {
        let resp = resp.map_err(|e| TransportFailure(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| TransportFailure(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

impl HttpTransport for ReqwestTransport {
    fn get(&self, url: &str, query: &[(String, String)]) -> Result<HttpResponse, TransportFailure> {
        Self::finish(self.client.get(url).query(query).send())
    }

    fn post_json(
        &self,
        url: &str,
        body: &serde_json::Value,
    ) -> Result<HttpResponse, TransportFailure> {
        Self::finish(self.client.post(url).json(body).send())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(500),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            attempts: 1,
            base_delay: Duration::ZERO,
            jitter: false,
        }
    }

    /// Delay before retry number `retry` (0-based): base * 2^retry, plus up
    /// to 50% random jitter.
    pub fn delay(&self, retry: u32) -> Duration {
        let base = self.base_delay.saturating_mul(1u32 << retry.min(16));
        if self.jitter && !base.is_zero() {
            let extra = rand::thread_rng().gen_range(0.0..0.5);
            base + base.mul_f64(extra)
        } else {
            base
        }
    }
}

/// Outcome of one attempt inside [`retry`].
pub enum Attempt<T, E> {
    Done(T),
    Retryable(String),
    Fatal(E),
}

pub enum RetryError<E> {
    Exhausted { attempts: u32, last: String },
    Fatal(E),
}

pub fn retry<T, E>(
    policy: &RetryPolicy,
    mut op: impl FnMut() -> Attempt<T, E>,
) -> Result<T, RetryError<E>> {
    let attempts = policy.attempts.max(1);
    let mut last = String::new();
    for n in 0..attempts {
        match op() {
            Attempt::Done(v) => return Ok(v),
            Attempt::Fatal(e) => return Err(RetryError::Fatal(e)),
            Attempt::Retryable(msg) => {
                log::warn!("attempt {}/{} failed: {msg}", n + 1, attempts);
                last = msg;
                if n + 1 < attempts {
                    thread::sleep(policy.delay(n));
                }
            }
        }
    }
    Err(RetryError::Exhausted { attempts, last })
}
