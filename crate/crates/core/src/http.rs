//! Blocking JSON POST with bounded exponential-backoff retries, shared by the
//! chat-completion backend and the remote embedding provider.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff_ms: 250,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): doubles each time,
    /// capped at `max_backoff_ms`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
        let ms = self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HttpError {
    #[error("request to {url} failed after {attempts} attempts: {last}")]
    Exhausted { url: String, attempts: u32, last: String },
    #[error("{url} returned status {status}: {body}")]
    Status { url: String, status: u16, body: String },
}

/// A configured HTTP client plus retry policy.
#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: Agent,
    retry: RetryPolicy,
}

impl JsonClient {
    pub fn new(timeout: Duration, retry: RetryPolicy) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent, retry }
    }

    /// POST `body` and return the response text of the first 2xx reply.
    ///
    /// Transport failures and 5xx replies are retried; any other status fails
    /// immediately.
    pub fn post(&self, url: &str, bearer: Option<&str>, body: &str) -> Result<String, HttpError> {
        let attempts = self.retry.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.retry.backoff(attempt));
            }
            let mut req = self
                .agent
                .post(url)
                .header("Content-Type", "application/json")
                .header("Accept", "application/json");
            if let Some(token) = bearer {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            match req.send(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.body_mut().read_to_string().unwrap_or_default();
                    if (200..300).contains(&status) {
                        return Ok(text);
                    }
                    if status >= 500 {
                        log::warn!("{url}: status {status} (attempt {})", attempt + 1);
                        last = format!("status {status}");
                        continue;
                    }
                    return Err(HttpError::Status {
                        url: url.to_string(),
                        status,
                        body: text,
                    });
                }
                Err(e) => {
                    log::warn!("{url}: {e} (attempt {})", attempt + 1);
                    last = e.to_string();
                }
            }
        }
        Err(HttpError::Exhausted {
            url: url.to_string(),
            attempts,
            last,
        })
    }
}
