use std::time::Duration;

use parking_lot::{Condvar, Mutex};

use super::request::AgentRequest;
use crate::domain::ImageHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Worth retrying: timeouts, connection failures, 5xx, 408, 429.
    Transient,
    /// Retrying cannot help: other 4xx, unresolvable inputs, unscripted mock calls.
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct BackendError {
    pub kind: FailureKind,
    pub status: Option<u16>,
    pub message: String,
}

impl BackendError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self { kind: FailureKind::Transient, status: None, message: message.into() }
    }

    pub fn terminal(message: impl Into<String>) -> Self {
        Self { kind: FailureKind::Terminal, status: None, message: message.into() }
    }

    /// Classifies an HTTP status code.
    pub fn from_status(status: u16, body: impl Into<String>) -> Self {
        let kind = if status >= 500 || status == 408 || status == 429 {
            FailureKind::Transient
        } else {
            FailureKind::Terminal
        };
        Self { kind, status: Some(status), message: format!("HTTP {status}: {}", body.into()) }
    }

    pub fn is_transient(&self) -> bool {
        self.kind == FailureKind::Transient
    }
}

/// A generative model endpoint answering agent requests with raw text.
pub trait ChatBackend: Send + Sync {
    fn identity(&self) -> String;
    fn complete(&self, request: &AgentRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy)]
pub enum EmbedInput<'a> {
    Text(&'a str),
    Image(&'a ImageHandle),
}

/// A dual-encoder endpoint returning raw (not necessarily normalized) vectors.
pub trait EmbedBackend: Send + Sync {
    fn identity(&self) -> String;
    fn embed(&self, input: EmbedInput<'_>) -> Result<Vec<f32>, BackendError>;
}

/// Attempts and exponential backoff for transient failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: Duration::from_millis(500), factor: 2.0 }
    }
}

impl RetryPolicy {
    /// Same attempt budget without sleeping; for mocks and tests.
    pub fn immediate() -> Self {
        Self { base_delay: Duration::ZERO, ..Self::default() }
    }

    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt <= 1 {
            return Duration::ZERO;
        }
        self.base_delay.mul_f64(self.factor.powi(attempt as i32 - 2))
    }

    /// Runs `call` until it succeeds, fails terminally, or the budget runs out.
    /// Returns the attempt count alongside the outcome.
    pub fn run<T>(&self, mut call: impl FnMut() -> Result<T, BackendError>) -> (u32, Result<T, BackendError>) {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let delay = self.delay_before(attempt);
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
            match call() {
                Ok(v) => return (attempt, Ok(v)),
                Err(err) if err.is_transient() && attempt < self.max_attempts.max(1) => {
                    log::debug!("transient backend failure (attempt {attempt}): {err}");
                }
                Err(err) => return (attempt, Err(err)),
            }
        }
    }
}

/// Counting semaphore bounding in-flight backend requests.
pub struct InflightGate {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

pub struct GatePermit<'a>(&'a InflightGate);

impl InflightGate {
    pub fn new(limit: usize) -> Self {
        Self { limit: limit.max(1), active: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn acquire(&self) -> GatePermit<'_> {
        let mut active = self.active.lock();
        while *active >= self.limit {
            self.freed.wait(&mut active);
        }
        *active += 1;
        GatePermit(self)
    }

    pub fn limit(&self) -> usize {
        self.limit
    }
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock() -= 1;
        self.0.freed.notify_one();
    }
}
